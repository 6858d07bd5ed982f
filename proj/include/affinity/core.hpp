#pragma once

// Domain types shared by every module: matched samples, discrete marginals,
// couplings, the affinity model and doubly-indexed (vectorized-matrix) algebra.
//
// Conventions used throughout the library:
//  * variances, covariances and fourth moments use the 1/n (population)
//    estimator;
//  * a pair (i, j) of a d_x x d_y matrix flattens to i * d_y + j (row-major).

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "affinity/errors.hpp"

namespace affinity {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// n observed couples: row k of `x` (men) is matched with row k of `y` (women).
struct MatchedSample {
    Matrix x;
    Matrix y;
    std::vector<std::string> names_x;
    std::vector<std::string> names_y;

    /// Builds a sample, generating names x1.., y1.. when none are given.
    static MatchedSample make(Matrix x, Matrix y, std::vector<std::string> names_x = {},
                              std::vector<std::string> names_y = {});

    Index size() const { return x.rows(); }
    Index dim_x() const { return x.cols(); }
    Index dim_y() const { return y.cols(); }

    /// Throws InvalidArgument unless n >= 2, d_x, d_y >= 1, rows agree,
    /// names match the column counts and every entry is finite.
    void validate() const;

    /// Same couples with the roles of men and women exchanged.
    MatchedSample swapped() const;
};

struct ColumnScaling {
    double mean = 0.0;
    double std = 1.0;
};

/// Per-column (mean, std) removed by `standardize`, for recovering original units.
struct ScalingRecord {
    std::vector<ColumnScaling> x;
    std::vector<ColumnScaling> y;
};

/// Centers every column and scales it to unit population variance.
/// Throws ZeroVarianceColumn naming the first constant column.
std::pair<MatchedSample, ScalingRecord> standardize(const MatchedSample& sample);

/// Population (1/n) variance of each column.
Vector column_variances(const Matrix& m);

/// Each column minus its mean.
Matrix centered(const Matrix& m);

/// Cross-moment matrix (1/n) sum_k x_k y_k' (the cross-covariance when the
/// sample is centered).
Matrix cross_covariance(const MatchedSample& sample);

/// A probability vector on a finite support (one row of `support` per atom).
struct DiscreteMarginal {
    Vector weights;
    Matrix support;

    /// Uniform weights 1/m on the rows of `support`.
    static DiscreteMarginal uniform(Matrix support);

    Index size() const { return weights.size(); }
    Index dim() const { return support.cols(); }

    /// Throws InvalidArgument unless weights are >= 0 and sum to 1 within 1e-12.
    void validate() const;

    /// Weighted mean and (population) variance of each support column.
    Vector mean() const;
    Vector variance() const;
};

/// A joint distribution on the product of two discrete supports.
struct Coupling {
    Matrix pi;
    DiscreteMarginal rows;
    DiscreteMarginal cols;

    Vector row_sums() const { return pi.rowwise().sum(); }
    Vector col_sums() const { return pi.colwise().sum().transpose(); }

    /// Sup-norm violation of both marginal constraints.
    double marginal_error() const;

    /// E_pi[X Y'] over the two supports.
    Matrix cross_moment() const;

    /// Checks nonnegativity and marginals within `tol`.
    bool satisfies_marginals(double tol) const;
};

/// Quadratic joint utility Phi(x, y) = x' A y with heterogeneity scale sigma.
struct AffinityModel {
    Matrix a;
    double sigma = 1.0;
    bool normalized = false;

    /// A = B / ||B||_F and sigma = 1 / ||B||_F. A zero B is kept as-is with
    /// sigma = 1 and `normalized` cleared.
    static AffinityModel from_b(const Matrix& b);

    /// B = A / sigma, the parameter identified at unit heterogeneity.
    Matrix b() const { return a / sigma; }

    double utility(const Vector& x, const Vector& y) const { return x.dot(a * y); }

    void validate() const;
};

/// Lagrange multipliers of the two marginal constraints, in utility units.
/// The additive gauge is fixed by sum_i w_i a_i = 0 on the row marginal.
/// Atoms with zero mass carry +infinity.
struct Potentials {
    Vector a;
    Vector b;

    void normalize(const Vector& row_weights);
};

inline Index flatten(Index i, Index j, Index inner) { return i * inner + j; }
inline std::pair<Index, Index> unflatten(Index k, Index inner) { return {k / inner, k % inner}; }

/// Linear operator on vectorized matrices. Rows are indexed by pairs (i, j) of
/// a row_outer x row_inner matrix, columns by pairs (k, l) of a
/// col_outer x col_inner matrix, both flattened row-major.
struct DoublyIndexedMatrix {
    Matrix data;
    Index row_outer = 0;
    Index row_inner = 0;
    Index col_outer = 0;
    Index col_inner = 0;

    DoublyIndexedMatrix() = default;
    DoublyIndexedMatrix(Matrix m, Index ro, Index ri, Index co, Index ci);

    /// Square operator on d_outer x d_inner matrices.
    static DoublyIndexedMatrix square(Matrix m, Index d_outer, Index d_inner) {
        return {std::move(m), d_outer, d_inner, d_outer, d_inner};
    }
    static DoublyIndexedMatrix identity(Index d_outer, Index d_inner);

    double operator()(Index i, Index j, Index k, Index l) const {
        return data(flatten(i, j, row_inner), flatten(k, l, col_inner));
    }

    /// N^{ij} = sum_{kl} R^{ij}_{kl} M^{kl}.
    Matrix apply(const Matrix& m) const;

    DoublyIndexedMatrix transpose() const;
    DoublyIndexedMatrix operator*(const DoublyIndexedMatrix& rhs) const;
    DoublyIndexedMatrix operator+(const DoublyIndexedMatrix& rhs) const;
};

/// Row-major vectorization of a matrix.
Vector vectorize(const Matrix& m);
Matrix unvectorize(const Vector& v, Index rows, Index cols);

/// R^{ij}_{kl} = a_{ik} b_{jl}; maps an (a.cols x b.cols) matrix M to a M b'.
DoublyIndexedMatrix kronecker(const Matrix& a, const Matrix& b);

}  // namespace affinity
