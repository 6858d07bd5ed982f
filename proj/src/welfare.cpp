#include "affinity/welfare.hpp"

#include <cmath>

namespace affinity {

namespace {

// out[:, i * w.cols() + j] = a[:, i] .* w[:, j]
Matrix pair_products(const Matrix& a, const Matrix& w) {
    Matrix out(a.rows(), a.cols() * w.cols());
    for (Index i = 0; i < a.cols(); ++i)
        for (Index j = 0; j < w.cols(); ++j)
            out.col(i * w.cols() + j) = a.col(i).cwiseProduct(w.col(j));
    return out;
}

Vector safe_inverse(const Vector& w) {
    Vector out(w.size());
    for (Index i = 0; i < w.size(); ++i) out(i) = w(i) > 0.0 ? 1.0 / w(i) : 0.0;
    return out;
}

// Largest |E[D | Y = y]| given the column residual sum_x pi (x, y) D(x, y).
double conditional_sup(const Matrix& residual, const Vector& inv_q) {
    return (inv_q.asDiagonal() * residual).cwiseAbs().maxCoeff();
}

struct CenteringSystem {
    const Matrix& pi;
    Vector inv_p;
    Vector inv_q;
    Vector q;
    Matrix r_row;  // x_i (pi Y)_j, per row atom
    Matrix rhs;    // reduced right-hand side over the column atoms

    // L B = q .* B - pi' (inv_p .* (pi B)); symmetric PSD, kernel = constants.
    Matrix apply(const Matrix& b) const {
        Matrix t = pi * b;
        t = inv_p.asDiagonal() * t;
        Matrix out = q.asDiagonal() * b;
        out.noalias() -= pi.transpose() * t;
        return out;
    }

    Matrix alpha_from(const Matrix& beta) const {
        Matrix t = r_row;
        t.noalias() -= pi * beta;
        return inv_p.asDiagonal() * t;
    }
};

void solve_cg(const CenteringSystem& sys, const CenteringConfig& cfg, Matrix beta,
              ScoreFunctions& out) {
    const Index cols = sys.rhs.cols();
    Matrix r = beta.isZero(0.0) ? sys.rhs : Matrix(sys.rhs - sys.apply(beta));
    int iterations = 0;
    // A few restarts from the true residual guard against drift of the
    // recursively updated one.
    for (int restart = 0; restart < 5; ++restart) {
        if (conditional_sup(r, sys.inv_q) < cfg.tol) break;
        Matrix z = sys.inv_q.asDiagonal() * r;
        Matrix dir = z;
        Vector rz = r.cwiseProduct(z).colwise().sum().transpose();
        while (iterations < cfg.max_iter) {
            ++iterations;
            const Matrix ad = sys.apply(dir);
            const Vector curv = dir.cwiseProduct(ad).colwise().sum().transpose();
            for (Index c = 0; c < cols; ++c) {
                if (!(curv(c) > 0.0) || !(rz(c) > 0.0)) continue;
                const double step = rz(c) / curv(c);
                beta.col(c) += step * dir.col(c);
                r.col(c) -= step * ad.col(c);
            }
            if (conditional_sup(r, sys.inv_q) < 0.1 * cfg.tol) break;
            z = sys.inv_q.asDiagonal() * r;
            const Vector rz_new = r.cwiseProduct(z).colwise().sum().transpose();
            for (Index c = 0; c < cols; ++c) {
                const double ratio = rz(c) > 0.0 ? rz_new(c) / rz(c) : 0.0;
                dir.col(c) = z.col(c) + ratio * dir.col(c);
            }
            rz = rz_new;
        }
        r = sys.rhs - sys.apply(beta);
        if (iterations >= cfg.max_iter) break;
    }
    out.iterations = iterations;
    out.residual = conditional_sup(r, sys.inv_q);
    out.beta = std::move(beta);
}

void solve_alternating(const CenteringSystem& sys, const Matrix& c_col, const CenteringConfig& cfg,
                       Matrix beta, ScoreFunctions& out) {
    double res = conditional_sup(beta.isZero(0.0) ? sys.rhs : Matrix(sys.rhs - sys.apply(beta)), sys.inv_q);
    int it = 0;
    while (res >= cfg.tol && it < cfg.max_iter) {
        ++it;
        const Matrix alpha = sys.alpha_from(beta);
        Matrix t = c_col;
        t.noalias() -= sys.pi.transpose() * alpha;
        beta = sys.inv_q.asDiagonal() * t;
        res = conditional_sup(sys.rhs - sys.apply(beta), sys.inv_q);
    }
    out.iterations = it;
    out.residual = res;
    out.beta = std::move(beta);
}

}  // namespace

WelfareEvaluation evaluate_welfare(const Matrix& b, const DiscreteMarginal& p,
                                   const DiscreteMarginal& q, const IpfpConfig& cfg,
                                   const Potentials* warm_start) {
    const Matrix phi = quadratic_utility(b, p.support, q.support);
    IpfpResult sol = solve_ipfp(phi, 1.0, p, q, cfg, warm_start);
    WelfareEvaluation ev;
    // With log pi = Phi - a - b the objective collapses to the dual value.
    double value = 0.0;
    for (Index i = 0; i < p.size(); ++i)
        if (p.weights(i) > 0.0) value += p.weights(i) * sol.potentials.a(i);
    for (Index j = 0; j < q.size(); ++j)
        if (q.weights(j) > 0.0) value += q.weights(j) * sol.potentials.b(j);
    ev.value = value;
    ev.gradient = sol.coupling.cross_moment();
    ev.coupling = std::move(sol.coupling);
    ev.potentials = std::move(sol.potentials);
    ev.report = sol.report;
    return ev;
}

double social_gain(const Coupling& coupling, const Matrix& phi, double sigma) {
    if (phi.rows() != coupling.pi.rows() || phi.cols() != coupling.pi.cols())
        throw DimensionMismatch("utility matrix does not match the coupling");
    double total = 0.0;
    for (Index j = 0; j < phi.cols(); ++j)
        for (Index i = 0; i < phi.rows(); ++i) {
            const double w = coupling.pi(i, j);
            if (w > 0.0) total += w * (phi(i, j) - sigma * std::log(w));
        }
    return total;
}

Matrix ScoreFunctions::evaluate(const Coupling& coupling, Index i, Index j) const {
    const Index c = flatten(i, j, dim_y);
    Matrix d = coupling.rows.support.col(i) * coupling.cols.support.col(j).transpose();
    d.colwise() -= alpha.col(c);
    d.rowwise() -= beta.col(c).transpose();
    return d;
}

ScoreFunctions score_functions(const Coupling& coupling, const CenteringConfig& cfg) {
    const Index cols = coupling.rows.support.cols() * coupling.cols.support.cols();
    return score_functions(coupling, cfg, Matrix::Zero(coupling.cols.size(), cols));
}

ScoreFunctions score_functions(const Coupling& coupling, const CenteringConfig& cfg,
                               const Matrix& initial_beta) {
    const Matrix& x = coupling.rows.support;
    const Matrix& y = coupling.cols.support;
    if (x.rows() != coupling.pi.rows() || y.rows() != coupling.pi.cols())
        throw DimensionMismatch("coupling supports do not match pi");
    if (initial_beta.rows() != y.rows() || initial_beta.cols() != x.cols() * y.cols())
        throw DimensionMismatch("initial centering does not match the coupling");
    const Matrix pi_y = coupling.pi * y;
    const Matrix pit_x = coupling.pi.transpose() * x;

    CenteringSystem sys{coupling.pi, safe_inverse(coupling.row_sums()),
                        safe_inverse(coupling.col_sums()), coupling.col_sums(),
                        pair_products(x, pi_y), Matrix()};
    const Matrix c_col = pair_products(pit_x, y);
    sys.rhs = c_col;
    sys.rhs.noalias() -= coupling.pi.transpose() * (sys.inv_p.asDiagonal() * sys.r_row);

    ScoreFunctions out;
    out.dim_x = x.cols();
    out.dim_y = y.cols();
    if (cfg.method == CenteringMethod::conjugate_gradient)
        solve_cg(sys, cfg, initial_beta, out);
    else
        solve_alternating(sys, c_col, cfg, initial_beta, out);
    if (!(out.residual < cfg.tol)) throw CenteringNotConverged(out.residual, out.iterations);

    // Gauge: sum_y q beta = 0, which leaves D unchanged.
    const Vector shift = (sys.q.transpose() * out.beta).transpose();
    out.beta.rowwise() -= shift.transpose();
    out.alpha = sys.alpha_from(out.beta);
    return out;
}

ScoreFunctions score_functions_dense(const Coupling& coupling) {
    const Matrix& x = coupling.rows.support;
    const Matrix& y = coupling.cols.support;
    const Matrix& pi = coupling.pi;
    const Index mx = pi.rows();
    const Index my = pi.cols();
    const Vector p = coupling.row_sums();
    const Vector q = coupling.col_sums();

    // Unknowns (alpha, beta); equations: every conditional mean of D is zero.
    Matrix sys = Matrix::Zero(mx + my, mx + my);
    sys.topLeftCorner(mx, mx) = p.asDiagonal();
    sys.topRightCorner(mx, my) = pi;
    sys.bottomLeftCorner(my, mx) = pi.transpose();
    sys.bottomRightCorner(my, my) = q.asDiagonal();
    const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(sys);

    ScoreFunctions out;
    out.dim_x = x.cols();
    out.dim_y = y.cols();
    out.alpha.resize(mx, x.cols() * y.cols());
    out.beta.resize(my, x.cols() * y.cols());
    for (Index i = 0; i < x.cols(); ++i)
        for (Index j = 0; j < y.cols(); ++j) {
            const Matrix prod = x.col(i) * y.col(j).transpose();
            Vector rhs(mx + my);
            rhs.head(mx) = pi.cwiseProduct(prod).rowwise().sum();
            rhs.tail(my) = pi.cwiseProduct(prod).colwise().sum().transpose();
            const Vector sol = cod.solve(rhs);
            out.alpha.col(flatten(i, j, y.cols())) = sol.head(mx);
            out.beta.col(flatten(i, j, y.cols())) = sol.tail(my);
        }
    return out;
}

DoublyIndexedMatrix fisher_information(const Coupling& coupling, const ScoreFunctions& scores) {
    const Matrix& x = coupling.rows.support;
    const Matrix& y = coupling.cols.support;
    const Index dx = x.cols();
    const Index dy = y.cols();
    const Matrix& pi = coupling.pi;

    // E_pi[x_i x_k y_j y_l] laid out as (i, k) x (j, l).
    const Matrix xx = pair_products(x, x);
    const Matrix yy = pair_products(y, y);
    const Matrix g = xx.transpose() * (pi * yy);
    Matrix f(dx * dy, dx * dy);
    for (Index i = 0; i < dx; ++i)
        for (Index j = 0; j < dy; ++j)
            for (Index k = 0; k < dx; ++k)
                for (Index l = 0; l < dy; ++l)
                    f(flatten(i, j, dy), flatten(k, l, dy)) = g(i * dx + k, j * dy + l);

    f.noalias() -= scores.alpha.transpose() * pair_products(x, pi * y);
    f.noalias() -= scores.beta.transpose() * pair_products(pi.transpose() * x, y);
    return DoublyIndexedMatrix::square(std::move(f), dx, dy);
}

DoublyIndexedMatrix fisher_information(const Coupling& coupling, const CenteringConfig& cfg) {
    return fisher_information(coupling, score_functions(coupling, cfg));
}

}  // namespace affinity
