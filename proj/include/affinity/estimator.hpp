#pragma once

// Moment-matching estimator of the affinity matrix: minimize the convex
// objective W_1(B) - <B, Sigma_XY>, whose gradient is the gap between the
// model-predicted and the observed cross-covariances.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "affinity/core.hpp"
#include "affinity/schrodinger.hpp"
#include "affinity/welfare.hpp"

namespace affinity {

struct FitConfig {
    double moment_tol = 1e-6;  // sup-norm of E_pi[XY'] - Sigma_XY at the solution
    int max_iter = 100;        // Newton iterations
    IpfpConfig ipfp;           // inner solver; tol is tightened to match moment_tol
    CenteringConfig centering;
    // Empirical supports larger than this are summarized (quantile groups in
    // one dimension, k-means otherwise) to keep the n x n kernel tractable.
    Index max_support = 3000;
    bool compute_fisher = true;  // Fisher information at the solution

    void validate() const;
};

struct FitReport {
    Matrix b_hat;
    std::vector<double> objective_trace;
    double moment_gap = 0.0;
    int iterations = 0;
    int inner_iterations = 0;
    bool degenerate = false;  // Sigma_XY was identically zero; B = 0 returned
    bool compressed = false;  // supports were summarized beyond exact deduplication
    Index support_x = 0;
    Index support_y = 0;
    std::vector<std::string> warnings;
};

struct FitResult {
    AffinityModel model;
    FitReport report;
    Coupling coupling;  // equilibrium at B-hat on the (centered) supports
    Potentials potentials;
    DoublyIndexedMatrix fisher;  // empty when not requested
    Matrix sigma_xy;
    Index n = 0;
};

/// Weighted support for the rows of `points`: identical rows are merged
/// exactly; beyond `max_support` atoms they are grouped. `assignment[k]` is
/// the atom of row k.
struct SupportSummary {
    DiscreteMarginal marginal;
    std::vector<Index> assignment;
    bool lossy = false;
};

SupportSummary summarize_support(const Matrix& points, Index max_support);

/// Fits B on the centered sample and normalizes A = B / ||B||, sigma = 1 / ||B||.
FitResult fit_affinity(const MatchedSample& sample, const FitConfig& cfg = {});

struct BootstrapFailure {
    Index replicate = 0;
    std::string message;
};

struct BootstrapResult {
    Index reps = 0;
    std::vector<Matrix> b_draws;  // successful replicates, in replicate order
    std::vector<Matrix> a_draws;
    std::vector<Vector> share_draws;
    Matrix b_mean, b_std;
    Matrix a_mean, a_std;
    Vector share_mean, share_std;
    std::vector<BootstrapFailure> failures;
};

/// Resamples couples with replacement and refits. Replicate r uses a seed
/// derived from (seed, r), so the summary is deterministic for a given seed
/// whatever the thread count. Standard deviations use the 1 / (R - 1)
/// convention and are zero for a single successful replicate.
BootstrapResult bootstrap_fit(const MatchedSample& sample, Index reps, std::uint64_t seed,
                              const FitConfig& cfg = {});

}  // namespace affinity
