#include "affinity/saliency.hpp"

#include <cmath>

namespace affinity {

namespace {

constexpr double kTieTolerance = 1e-8;

void check_variances(const Vector& s, Index d, const char* side) {
    if (s.size() != d)
        throw DimensionMismatch(std::string("variance vector for ") + side + " has the wrong length");
    for (Index i = 0; i < s.size(); ++i)
        if (!(s(i) > 0.0) || !std::isfinite(s(i)))
            throw NonPositiveVariance(std::string("variance of ") + side + " attribute " +
                                      std::to_string(i + 1) + " is not positive");
}

// Index of the largest |entry|, lowest index on ties.
Index dominant(const Eigen::Ref<const Vector>& row) {
    Index best = 0;
    for (Index k = 1; k < row.size(); ++k)
        if (std::abs(row(k)) > std::abs(row(best))) best = k;
    return best;
}

}  // namespace

Matrix SaliencyResult::lambda_matrix() const {
    Matrix l = Matrix::Zero(u.rows(), v.rows());
    for (Index k = 0; k < lambda.size(); ++k) l(k, k) = lambda(k);
    return l;
}

SaliencyResult saliency(const Matrix& a, const Vector& s_x, const Vector& s_y) {
    if (a.size() == 0) throw InvalidArgument("empty affinity matrix");
    check_variances(s_x, a.rows(), "x");
    check_variances(s_y, a.cols(), "y");
    SaliencyResult r;
    r.s_x = s_x;
    r.s_y = s_y;
    r.theta = s_x.cwiseSqrt().asDiagonal() * a * s_y.cwiseSqrt().asDiagonal();

    const Eigen::JacobiSVD<Matrix> svd(r.theta, Eigen::ComputeFullU | Eigen::ComputeFullV);
    r.u = svd.matrixU().transpose();
    r.v = svd.matrixV().transpose();
    r.lambda = svd.singularValues();
    for (Index k = 0; k < r.u.rows(); ++k) {
        if (r.u(k, dominant(r.u.row(k).transpose())) < 0.0) {
            r.u.row(k) *= -1.0;
            if (k < r.lambda.size()) r.v.row(k) *= -1.0;
        }
    }
    // Rows of v beyond the paired ones follow the same rule on their own.
    for (Index k = r.lambda.size(); k < r.v.rows(); ++k)
        if (r.v(k, dominant(r.v.row(k).transpose())) < 0.0) r.v.row(k) *= -1.0;

    const double total = r.lambda.sum();
    r.shares = total > 0.0 ? Vector(r.lambda / total) : Vector::Zero(r.lambda.size());
    const double scale = std::max(r.lambda.size() ? r.lambda(0) : 0.0, 1e-300);
    for (Index k = 0; k + 1 < r.lambda.size(); ++k)
        if (r.lambda(k) - r.lambda(k + 1) <= kTieTolerance * scale) r.tied.emplace_back(k, k + 1);

    r.loadings_x = r.u * s_x.cwiseSqrt().cwiseInverse().asDiagonal();
    r.loadings_y = r.v * s_y.cwiseSqrt().cwiseInverse().asDiagonal();
    return r;
}

SaliencyResult saliency(const AffinityModel& model, const Vector& s_x, const Vector& s_y) {
    return saliency(model.a, s_x, s_y);
}

std::pair<Matrix, Matrix> project_indices(const MatchedSample& sample, const SaliencyResult& result) {
    if (sample.dim_x() != result.loadings_x.cols() || sample.dim_y() != result.loadings_y.cols())
        throw DimensionMismatch("sample dimensions do not match the saliency result");
    return {sample.x * result.loadings_x.transpose(), sample.y * result.loadings_y.transpose()};
}

AffinityModel truncate(const SaliencyResult& result, Index k, double sigma) {
    const Index d = result.lambda.size();
    if (k < 1 || k > d) throw InvalidArgument("truncation rank must be in [1, d]");
    const Matrix theta_k = result.u.topRows(k).transpose() * result.lambda.head(k).asDiagonal() *
                           result.v.topRows(k);
    AffinityModel m;
    m.a = result.s_x.cwiseSqrt().cwiseInverse().asDiagonal() * theta_k *
          result.s_y.cwiseSqrt().cwiseInverse().asDiagonal();
    m.sigma = sigma;
    m.normalized = false;
    return m;
}

double explained_share(const SaliencyResult& result, Index k) {
    if (k < 1 || k > result.shares.size()) throw InvalidArgument("k must be in [1, d]");
    return result.shares.head(k).sum();
}

}  // namespace affinity
