#include "affinity/core.hpp"

#include <cmath>

namespace affinity {

namespace {

std::vector<std::string> default_names(const std::string& prefix, Index count) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) names.push_back(prefix + std::to_string(k + 1));
    return names;
}

std::vector<ColumnScaling> standardize_columns(Matrix& m, const std::vector<std::string>& names) {
    const double n = static_cast<double>(m.rows());
    std::vector<ColumnScaling> record;
    record.reserve(static_cast<std::size_t>(m.cols()));
    for (Index c = 0; c < m.cols(); ++c) {
        auto col = m.col(c);
        const double mean = col.mean();
        col.array() -= mean;
        const double var = col.squaredNorm() / n;
        const double sd = std::sqrt(var);
        if (!(sd > 1e-14 * std::max(1.0, std::abs(mean))))
            throw ZeroVarianceColumn(names[static_cast<std::size_t>(c)]);
        col /= sd;
        record.push_back({mean, sd});
    }
    return record;
}

}  // namespace

MatchedSample MatchedSample::make(Matrix x, Matrix y, std::vector<std::string> names_x,
                                  std::vector<std::string> names_y) {
    MatchedSample s;
    if (names_x.empty()) names_x = default_names("x", x.cols());
    if (names_y.empty()) names_y = default_names("y", y.cols());
    s.x = std::move(x);
    s.y = std::move(y);
    s.names_x = std::move(names_x);
    s.names_y = std::move(names_y);
    return s;
}

void MatchedSample::validate() const {
    if (x.rows() != y.rows())
        throw DimensionMismatch("x and y must have the same number of couples");
    if (x.rows() < 2) throw InvalidArgument("a matched sample needs at least 2 couples");
    if (x.cols() < 1 || y.cols() < 1)
        throw InvalidArgument("each side needs at least one attribute");
    if (static_cast<Index>(names_x.size()) != x.cols() ||
        static_cast<Index>(names_y.size()) != y.cols())
        throw DimensionMismatch("attribute names do not match column counts");
    if (!x.allFinite() || !y.allFinite())
        throw InvalidArgument("matched sample contains non-finite values");
}

MatchedSample MatchedSample::swapped() const { return {y, x, names_y, names_x}; }

std::pair<MatchedSample, ScalingRecord> standardize(const MatchedSample& sample) {
    sample.validate();
    MatchedSample out = sample;
    ScalingRecord record;
    record.x = standardize_columns(out.x, out.names_x);
    record.y = standardize_columns(out.y, out.names_y);
    return {std::move(out), std::move(record)};
}

Vector column_variances(const Matrix& m) {
    const Matrix c = centered(m);
    return c.colwise().squaredNorm().transpose() / static_cast<double>(m.rows());
}

Matrix centered(const Matrix& m) {
    return m.rowwise() - m.colwise().mean();
}

Matrix cross_covariance(const MatchedSample& sample) {
    if (sample.x.rows() != sample.y.rows() || sample.x.rows() == 0)
        throw DimensionMismatch("cross_covariance: x and y row counts differ");
    return sample.x.transpose() * sample.y / static_cast<double>(sample.x.rows());
}

DiscreteMarginal DiscreteMarginal::uniform(Matrix support) {
    DiscreteMarginal m;
    const Index n = support.rows();
    if (n == 0) throw InvalidArgument("empty support");
    m.weights = Vector::Constant(n, 1.0 / static_cast<double>(n));
    m.support = std::move(support);
    return m;
}

void DiscreteMarginal::validate() const {
    if (weights.size() != support.rows())
        throw DimensionMismatch("marginal weights and support sizes differ");
    if (weights.size() == 0) throw InvalidArgument("empty marginal");
    if ((weights.array() < 0.0).any() || !weights.allFinite())
        throw InvalidArgument("marginal weights must be finite and nonnegative");
    if (std::abs(weights.sum() - 1.0) >= 1e-12)
        throw InvalidArgument("marginal weights must sum to 1");
}

Vector DiscreteMarginal::mean() const { return support.transpose() * weights; }

Vector DiscreteMarginal::variance() const {
    const Vector mu = mean();
    const Matrix c = support.rowwise() - mu.transpose();
    return c.array().square().matrix().transpose() * weights;
}

double Coupling::marginal_error() const {
    const double r = (row_sums() - rows.weights).cwiseAbs().maxCoeff();
    const double c = (col_sums() - cols.weights).cwiseAbs().maxCoeff();
    return std::max(r, c);
}

Matrix Coupling::cross_moment() const {
    return rows.support.transpose() * (pi * cols.support);
}

bool Coupling::satisfies_marginals(double tol) const {
    return (pi.array() >= 0.0).all() && marginal_error() < tol;
}

AffinityModel AffinityModel::from_b(const Matrix& b) {
    AffinityModel m;
    const double norm = b.norm();
    if (norm == 0.0) {
        m.a = b;
        m.sigma = 1.0;
        m.normalized = false;
        return m;
    }
    m.a = b / norm;
    m.sigma = 1.0 / norm;
    m.normalized = true;
    return m;
}

void AffinityModel::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw InvalidArgument("sigma must be positive and finite");
    if (!a.allFinite()) throw InvalidArgument("affinity matrix must be finite");
    if (normalized && std::abs(a.norm() - 1.0) >= 1e-12)
        throw InvalidArgument("normalized affinity matrix must have unit Frobenius norm");
}

void Potentials::normalize(const Vector& row_weights) {
    double shift = 0.0;
    for (Index i = 0; i < a.size(); ++i)
        if (row_weights[i] > 0.0) shift += row_weights[i] * a[i];
    a.array() -= shift;
    b.array() += shift;
}

DoublyIndexedMatrix::DoublyIndexedMatrix(Matrix m, Index ro, Index ri, Index co, Index ci)
    : data(std::move(m)), row_outer(ro), row_inner(ri), col_outer(co), col_inner(ci) {
    if (data.rows() != ro * ri || data.cols() != co * ci)
        throw DimensionMismatch("doubly-indexed matrix shape does not match its index ranges");
}

DoublyIndexedMatrix DoublyIndexedMatrix::identity(Index d_outer, Index d_inner) {
    return square(Matrix::Identity(d_outer * d_inner, d_outer * d_inner), d_outer, d_inner);
}

Matrix DoublyIndexedMatrix::apply(const Matrix& m) const {
    if (m.rows() != col_outer || m.cols() != col_inner)
        throw DimensionMismatch("doubly-indexed apply: operand shape mismatch");
    return unvectorize(data * vectorize(m), row_outer, row_inner);
}

DoublyIndexedMatrix DoublyIndexedMatrix::transpose() const {
    return {data.transpose(), col_outer, col_inner, row_outer, row_inner};
}

DoublyIndexedMatrix DoublyIndexedMatrix::operator*(const DoublyIndexedMatrix& rhs) const {
    if (col_outer != rhs.row_outer || col_inner != rhs.row_inner)
        throw DimensionMismatch("doubly-indexed product: index ranges do not chain");
    return {data * rhs.data, row_outer, row_inner, rhs.col_outer, rhs.col_inner};
}

DoublyIndexedMatrix DoublyIndexedMatrix::operator+(const DoublyIndexedMatrix& rhs) const {
    if (row_outer != rhs.row_outer || row_inner != rhs.row_inner ||
        col_outer != rhs.col_outer || col_inner != rhs.col_inner)
        throw DimensionMismatch("doubly-indexed sum: index ranges differ");
    return {data + rhs.data, row_outer, row_inner, col_outer, col_inner};
}

Vector vectorize(const Matrix& m) {
    Vector v(m.size());
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) v[flatten(i, j, m.cols())] = m(i, j);
    return v;
}

Matrix unvectorize(const Vector& v, Index rows, Index cols) {
    if (v.size() != rows * cols) throw DimensionMismatch("unvectorize: size mismatch");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = v[flatten(i, j, cols)];
    return m;
}

DoublyIndexedMatrix kronecker(const Matrix& a, const Matrix& b) {
    if (a.size() == 0 || b.size() == 0)
        throw DimensionMismatch("kronecker: empty operand");
    Matrix r(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index k = 0; k < a.cols(); ++k)
            r.block(i * b.rows(), k * b.cols(), b.rows(), b.cols()) = a(i, k) * b;
    return {std::move(r), a.rows(), b.rows(), a.cols(), b.cols()};
}

}  // namespace affinity
