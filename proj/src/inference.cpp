#include "affinity/inference.hpp"

#include <cmath>

#include "affinity/stats.hpp"

namespace affinity {

namespace {

constexpr double kCornerTolerance = 1e-10;
constexpr double kRankTolerance = 1e-12;

// cov(a_i^2, b_k^2) under weights w on paired rows of a and b.
Matrix square_covariance(const Matrix& a, const Matrix& b, const Vector& w) {
    const Matrix a2 = a.cwiseAbs2();
    const Matrix b2 = b.cwiseAbs2();
    const Vector ma = a2.transpose() * w;
    const Vector mb = b2.transpose() * w;
    return a2.transpose() * w.asDiagonal() * b2 - ma * mb.transpose();
}

// (i, j), (k, l) -> 1{i = j} 1{k = l} c(i, k)
DoublyIndexedMatrix diagonal_block(const Matrix& c) {
    const Index da = c.rows();
    const Index db = c.cols();
    Matrix m = Matrix::Zero(da * da, db * db);
    for (Index i = 0; i < da; ++i)
        for (Index k = 0; k < db; ++k) m(flatten(i, i, da), flatten(k, k, db)) = c(i, k);
    return {std::move(m), da, da, db, db};
}

// Inverse of dR -> S^{1/2} dR + dR S^{1/2} for diagonal S.
DoublyIndexedMatrix sqrt_sensitivity(const Vector& s) {
    const Index d = s.size();
    const Vector r = s.cwiseSqrt();
    Matrix m = Matrix::Zero(d * d, d * d);
    for (Index i = 0; i < d; ++i)
        for (Index k = 0; k < d; ++k) m(flatten(i, k, d), flatten(i, k, d)) = 1.0 / (r(i) + r(k));
    return DoublyIndexedMatrix::square(std::move(m), d, d);
}

Matrix sym_sqrt(const Matrix& m, bool inverse) {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    if (inverse) ev = ev.cwiseInverse();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double smallest_singular_value(const Matrix& m) {
    return Eigen::JacobiSVD<Matrix>(m).singularValues().minCoeff();
}

}  // namespace

Matrix AsymptoticCovariance::b_standard_errors() const {
    const Vector var = f_inv.data.diagonal() / static_cast<double>(n);
    return unvectorize(var.cwiseMax(0.0).cwiseSqrt(), f_inv.row_outer, f_inv.row_inner);
}

AsymptoticCovariance asymptotic_covariance(const MatchedSample& sample, const Matrix& b,
                                           const Coupling& coupling, const CovarianceConfig& cfg,
                                           const DoublyIndexedMatrix* fisher) {
    sample.validate();
    const Index dx = sample.dim_x();
    const Index dy = sample.dim_y();
    if (b.rows() != dx || b.cols() != dy) throw DimensionMismatch("B does not match the sample");
    if (coupling.rows.dim() != dx || coupling.cols.dim() != dy)
        throw DimensionMismatch("coupling supports do not match the sample");

    AsymptoticCovariance out;
    out.n = sample.size();
    out.fisher = fisher ? *fisher : fisher_information(coupling, cfg.centering);
    const Matrix fs = 0.5 * (out.fisher.data + out.fisher.data.transpose());
    const Eigen::SelfAdjointEigenSolver<Matrix> es(fs);
    out.min_fisher_eigenvalue = es.eigenvalues().minCoeff();
    if (!(out.min_fisher_eigenvalue > kRankTolerance * std::max(1.0, es.eigenvalues().maxCoeff())))
        throw SingularFisher(out.min_fisher_eigenvalue);
    out.f_inv = DoublyIndexedMatrix::square(
        es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() * es.eigenvectors().transpose(),
        dx, dy);

    const Matrix x = centered(sample.x);
    const Matrix y = centered(sample.y);
    out.s_x = column_variances(x);
    out.s_y = column_variances(y);
    const Vector w = Vector::Constant(out.n, 1.0 / static_cast<double>(out.n));
    out.k_xx = diagonal_block(square_covariance(x, x, w));
    out.k_yy = diagonal_block(square_covariance(y, y, w));
    if (cfg.fourth_moments == FourthMomentSource::empirical) {
        out.k_xy = diagonal_block(square_covariance(x, y, w));
    } else {
        const Matrix& pi = coupling.pi;
        const Matrix x2 = coupling.rows.support.cwiseAbs2();
        const Matrix y2 = coupling.cols.support.cwiseAbs2();
        const Vector mx = x2.transpose() * coupling.row_sums();
        const Vector my = y2.transpose() * coupling.col_sums();
        out.k_xy = diagonal_block(x2.transpose() * pi * y2 - mx * my.transpose());
    }

    const Matrix sxh = out.s_x.cwiseSqrt().asDiagonal();
    const Matrix syh = out.s_y.cwiseSqrt().asDiagonal();
    out.theta = sxh * b * syh;
    out.t_xy = kronecker(sxh, syh);
    out.t_x = kronecker(Matrix::Identity(dx, dx), syh * b.transpose()) * sqrt_sensitivity(out.s_x);
    out.t_y = kronecker(sxh * b, Matrix::Identity(dy, dy)) * sqrt_sensitivity(out.s_y);

    const DoublyIndexedMatrix cross = out.t_x * out.k_xy * out.t_y.transpose();
    out.v_theta = out.t_xy * out.f_inv * out.t_xy.transpose() +
                  out.t_x * out.k_xx * out.t_x.transpose() +
                  out.t_y * out.k_yy * out.t_y.transpose() + cross + cross.transpose();
    return out;
}

AsymptoticCovariance asymptotic_covariance(const MatchedSample& sample, const AffinityModel& model,
                                           const Coupling& coupling, const CovarianceConfig& cfg) {
    return asymptotic_covariance(sample, model.b(), coupling, cfg);
}

RankTestResult rank_test(const Matrix& theta_hat, const DoublyIndexedMatrix& v_theta, Index n,
                         Index p) {
    const Index dx = theta_hat.rows();
    const Index dy = theta_hat.cols();
    const Index d = std::min(dx, dy);
    if (p < 1 || p >= d) throw InvalidArgument("rank hypothesis must satisfy 1 <= p < min(d_x, d_y)");
    if (n < 1) throw InvalidArgument("sample size must be positive");
    if (v_theta.data.rows() != dx * dy || v_theta.data.cols() != dx * dy)
        throw DimensionMismatch("covariance does not match theta");

    const Eigen::JacobiSVD<Matrix> svd(theta_hat, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Matrix& w = svd.matrixU();
    const Matrix& z = svd.matrixV();
    const Index qx = dx - p;
    const Index qy = dy - p;
    const Matrix w22 = w.bottomRightCorner(qx, qx);
    const Matrix z22 = z.bottomRightCorner(qy, qy);
    const double sw = smallest_singular_value(w22);
    const double sz = smallest_singular_value(z22);
    if (sw < kCornerTolerance || sz < kCornerTolerance)
        throw SingularCornerBlock(static_cast<int>(p), std::min(sw, sz));

    // A_perp = [W12; W22] W22^{-1} (W22 W22')^{1/2}, B_perp likewise on the right.
    const Matrix a_perp = w.rightCols(qx) * w22.inverse() * sym_sqrt(w22 * w22.transpose(), false);
    const Matrix b_perp = sym_sqrt(z22 * z22.transpose(), false) * z22.transpose().inverse() *
                          z.rightCols(qy).transpose();

    RankTestResult r;
    r.p = p;
    r.df = qx * qy;
    r.t_matrix = a_perp.transpose() * theta_hat * b_perp.transpose();
    r.t_vec = vectorize(r.t_matrix);
    const DoublyIndexedMatrix proj = kronecker(a_perp.transpose(), b_perp);
    r.omega = proj.data * v_theta.data * proj.data.transpose();
    r.omega = 0.5 * (r.omega + r.omega.transpose());

    const Eigen::SelfAdjointEigenSolver<Matrix> es(r.omega);
    const Vector& ev = es.eigenvalues();
    const double cutoff = kRankTolerance * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    Vector inv = Vector::Zero(ev.size());
    for (Index k = 0; k < ev.size(); ++k)
        if (ev(k) > cutoff) {
            inv(k) = 1.0 / ev(k);
            ++r.omega_rank;
        }
    r.degenerate = r.omega_rank < ev.size();
    const Vector proj_t = es.eigenvectors().transpose() * r.t_vec;
    r.statistic = std::max(0.0, static_cast<double>(n) * proj_t.dot(inv.cwiseProduct(proj_t)));
    r.p_value = chi2_survival(r.statistic, static_cast<double>(r.df));
    return r;
}

Index sorting_dimension(const Matrix& theta_hat, const DoublyIndexedMatrix& v_theta, Index n,
                        double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must be in (0, 1)");
    const Index d = std::min(theta_hat.rows(), theta_hat.cols());
    for (Index p = 1; p < d; ++p)
        if (rank_test(theta_hat, v_theta, n, p).p_value >= alpha) return p;
    return d;
}

Index sorting_dimension(const AsymptoticCovariance& cov, double alpha) {
    return sorting_dimension(cov.theta, cov.v_theta, cov.n, alpha);
}

Index sorting_dimension(const MatchedSample& sample, const AffinityModel& model,
                        const Coupling& coupling, double alpha) {
    return sorting_dimension(asymptotic_covariance(sample, model, coupling), alpha);
}

}  // namespace affinity
