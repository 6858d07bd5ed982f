#pragma once

// Saliency analysis: SVD of the variance-rescaled affinity matrix into
// orthogonal indices of mutual attractiveness.

#include <utility>
#include <vector>

#include "affinity/core.hpp"

namespace affinity {

struct SaliencyResult {
    Matrix theta;       // S_X^{1/2} A S_Y^{1/2}
    Matrix u;           // d_x x d_x orthogonal, theta = u' diag(lambda) v
    Matrix v;           // d_y x d_y orthogonal
    Vector lambda;      // nonincreasing, length min(d_x, d_y)
    Matrix loadings_x;  // u S_X^{-1/2}: row k gives index k in original units
    Matrix loadings_y;  // v S_Y^{-1/2}
    Vector shares;      // lambda / sum(lambda)
    Vector s_x;         // attribute variances used for the rescaling
    Vector s_y;
    // Pairs (k, k + 1) of singular values equal within tolerance: the
    // singular vectors of such a block are only determined up to rotation.
    std::vector<std::pair<Index, Index>> tied;

    bool degenerate_subspace() const { return !tied.empty(); }
    /// Diagonal d_x x d_y matrix of singular values.
    Matrix lambda_matrix() const;
};

/// Signs: each row of u has its largest-magnitude entry positive (ties go to
/// the lowest index), and the matching row of v is flipped with it.
SaliencyResult saliency(const Matrix& a, const Vector& s_x, const Vector& s_y);
SaliencyResult saliency(const AffinityModel& model, const Vector& s_x, const Vector& s_y);

/// Per-couple indices x~ = u S_X^{-1/2} x and y~ = v S_Y^{-1/2} y (rows).
std::pair<Matrix, Matrix> project_indices(const MatchedSample& sample, const SaliencyResult& result);

/// Rank-k affinity matrix from the top k singular triplets, in original
/// attribute units. Carries the input model's sigma.
AffinityModel truncate(const SaliencyResult& result, Index k, double sigma = 1.0);

/// sum_{i <= k} lambda_i / sum lambda.
double explained_share(const SaliencyResult& result, Index k);

}  // namespace affinity
