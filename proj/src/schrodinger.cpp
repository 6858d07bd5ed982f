#include "affinity/schrodinger.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <vector>

namespace affinity {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Scalings are folded into the log-potentials once |log u| or |log v| passes
// this bound, keeping the stabilized kernel well inside double range.
constexpr double kAbsorbBound = 30.0;
constexpr double kTinyMass = 1e-290;
// Kernels whose log-range exceeds this are solved by sigma continuation.
constexpr double kContinuationRange = 50.0;
constexpr double kStageTol = 1e-6;

Vector log_weights(const Vector& w) {
    Vector out(w.size());
    for (Index i = 0; i < w.size(); ++i) out(i) = w(i) > 0.0 ? std::log(w(i)) : -kInf;
    return out;
}

// f_i = log p_i - logsumexp_j (phi_ij / sigma + g_j)
void row_update(const Matrix& phi, double inv_sigma, const Vector& log_p, const Vector& g,
                Vector& f) {
    const Index n = phi.rows();
    const Index m = phi.cols();
    Vector row_max = Vector::Constant(n, -kInf);
    for (Index j = 0; j < m; ++j) {
        if (g(j) == -kInf) continue;
        for (Index i = 0; i < n; ++i) row_max(i) = std::max(row_max(i), phi(i, j) * inv_sigma + g(j));
    }
    Vector acc = Vector::Zero(n);
    for (Index j = 0; j < m; ++j) {
        if (g(j) == -kInf) continue;
        for (Index i = 0; i < n; ++i) acc(i) += std::exp(phi(i, j) * inv_sigma + g(j) - row_max(i));
    }
    for (Index i = 0; i < n; ++i)
        f(i) = log_p(i) == -kInf ? -kInf : log_p(i) - row_max(i) - std::log(acc(i));
}

// g_j = log q_j - logsumexp_i (phi_ij / sigma + f_i)
void col_update(const Matrix& phi, double inv_sigma, const Vector& log_q, const Vector& f,
                Vector& g) {
    const Index n = phi.rows();
    const Index m = phi.cols();
    for (Index j = 0; j < m; ++j) {
        if (log_q(j) == -kInf) {
            g(j) = -kInf;
            continue;
        }
        double mx = -kInf;
        for (Index i = 0; i < n; ++i)
            if (f(i) != -kInf) mx = std::max(mx, phi(i, j) * inv_sigma + f(i));
        double acc = 0.0;
        for (Index i = 0; i < n; ++i)
            if (f(i) != -kInf) acc += std::exp(phi(i, j) * inv_sigma + f(i) - mx);
        g(j) = log_q(j) - mx - std::log(acc);
    }
}

// K~_ij = exp(phi_ij / sigma + f_i + g_j), zero on dead rows / columns.
void build_kernel(const Matrix& phi, double inv_sigma, const Vector& f, const Vector& g,
                  Matrix& k) {
    k.resize(phi.rows(), phi.cols());
    for (Index j = 0; j < phi.cols(); ++j) {
        if (g(j) == -kInf) {
            k.col(j).setZero();
            continue;
        }
        for (Index i = 0; i < phi.rows(); ++i)
            k(i, j) = f(i) == -kInf ? 0.0 : std::exp(phi(i, j) * inv_sigma + f(i) + g(j));
    }
}

// Builds K~ = exp(phi / sigma + f + g) with f set so that every live row of
// K~ sums to its target mass. Each row is stabilized by its largest exponent,
// so the row sums never underflow.
void seed_kernel(const Matrix& phi, double inv_sigma, const Vector& log_p, const Vector& g,
                 Vector& f, Matrix& k) {
    const Index n = phi.rows();
    const Index m = phi.cols();
    Vector row_max = Vector::Constant(n, -kInf);
    for (Index j = 0; j < m; ++j) {
        if (g(j) == -kInf) continue;
        for (Index i = 0; i < n; ++i) row_max(i) = std::max(row_max(i), phi(i, j) * inv_sigma + g(j));
    }
    k.resize(n, m);
    Vector acc = Vector::Zero(n);
    for (Index j = 0; j < m; ++j) {
        if (g(j) == -kInf) {
            k.col(j).setZero();
            continue;
        }
        for (Index i = 0; i < n; ++i) {
            const double e = std::exp(phi(i, j) * inv_sigma + g(j) - row_max(i));
            k(i, j) = e;
            acc(i) += e;
        }
    }
    Vector scale(n);
    for (Index i = 0; i < n; ++i) {
        if (log_p(i) == -kInf) {
            f(i) = -kInf;
            scale(i) = 0.0;
        } else {
            f(i) = log_p(i) - row_max(i) - std::log(acc(i));
            scale(i) = std::exp(log_p(i) - std::log(acc(i)));
        }
    }
    k = scale.asDiagonal() * k;
}

void check_inputs(const Matrix& phi, double sigma, const DiscreteMarginal& p,
                  const DiscreteMarginal& q) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw InvalidArgument("sigma must be positive and finite");
    if (phi.rows() != p.size() || phi.cols() != q.size())
        throw DimensionMismatch("utility matrix does not match marginal sizes");
    if (phi.size() == 0) throw InvalidArgument("empty support");
    if (!phi.allFinite()) throw InvalidArgument("utility matrix has non-finite entries");
    p.validate();
    q.validate();
}

Potentials to_potentials(const Vector& f, const Vector& g, double sigma, const Vector& row_w) {
    Potentials pot{-sigma * f, -sigma * g};
    for (Index i = 0; i < pot.a.size(); ++i)
        if (f(i) == -kInf) pot.a(i) = kInf;
    for (Index j = 0; j < pot.b.size(); ++j)
        if (g(j) == -kInf) pot.b(j) = kInf;
    pot.normalize(row_w);
    return pot;
}

IpfpResult solve_plain(const Matrix& phi, double sigma, const DiscreteMarginal& p,
                       const DiscreteMarginal& q, const IpfpConfig& cfg) {
    const Matrix k = (phi / sigma).array().exp().matrix();
    if (!k.allFinite() || (k.array() <= 0.0).any())
        throw NumericalOverflow("exp(Phi / sigma) is not representable; use the log-domain solver");
    Vector u = Vector::Ones(p.size());
    Vector v = Vector::Ones(q.size());
    IterationReport rep;
    double err = kInf;
    for (int it = 1; it <= cfg.max_iter; ++it) {
        const Vector kv = k * v;
        err = (u.cwiseProduct(kv) - p.weights).cwiseAbs().maxCoeff();
        rep.iterations = it;
        if (it > 1 && err < cfg.tol) break;
        u = p.weights.cwiseQuotient(kv);
        v = q.weights.cwiseQuotient(k.transpose() * u);
        if (!u.allFinite() || !v.allFinite())
            throw NumericalOverflow("scaling vectors overflowed; use the log-domain solver");
    }
    IpfpResult res;
    res.coupling.pi = u.asDiagonal() * k * v.asDiagonal();
    res.coupling.rows = p;
    res.coupling.cols = q;
    rep.marginal_error = res.coupling.marginal_error();
    res.report = rep;
    if (rep.marginal_error >= cfg.tol)
        throw NotConverged("IPFP", rep.marginal_error, rep.iterations);
    Vector f(p.size()), g(q.size());
    for (Index i = 0; i < f.size(); ++i) f(i) = u(i) > 0.0 ? std::log(u(i)) : -kInf;
    for (Index j = 0; j < g.size(); ++j) g(j) = v(j) > 0.0 ? std::log(v(j)) : -kInf;
    res.potentials = to_potentials(f, g, sigma, p.weights);
    return res;
}

}  // namespace

void IpfpConfig::validate() const {
    if (!(tol > 0.0)) throw InvalidArgument("IPFP tolerance must be positive");
    if (max_iter < 1) throw InvalidArgument("IPFP max_iter must be at least 1");
}

Matrix quadratic_utility(const Matrix& a, const Matrix& x_support, const Matrix& y_support) {
    if (a.rows() != x_support.cols() || a.cols() != y_support.cols())
        throw DimensionMismatch("affinity matrix does not match support dimensions");
    return x_support * a * y_support.transpose();
}

namespace {

// Log-domain scaling at one value of sigma. g holds log-scalings in units of
// 1 / sigma on entry; f and g are updated in place and k is left equal to
// exp(phi / sigma + f + g). Returns true on convergence.
bool run_stage(const Matrix& phi, double sigma, const DiscreteMarginal& p,
               const DiscreteMarginal& q, const Vector& log_p, const Vector& log_q, double tol,
               int max_iter, Vector& f, Vector& g, Matrix& k, IterationReport& rep) {
    const double inv_sigma = 1.0 / sigma;
    const Index n = p.size();
    const Index m = q.size();
    seed_kernel(phi, inv_sigma, log_p, g, f, k);
    Vector u = Vector::Ones(n);
    Vector v = Vector::Ones(m);

    // Folds the scalings into f, g and k.
    auto fold = [&] {
        k = u.asDiagonal() * k * v.asDiagonal();
        for (Index i = 0; i < n; ++i)
            if (f(i) != -kInf) f(i) += std::log(u(i));
        for (Index j = 0; j < m; ++j)
            if (g(j) != -kInf) g(j) += std::log(v(j));
        u.setOnes();
        v.setOnes();
    };

    Vector kv(n), ktu(m);
    for (int it = 1; it <= max_iter; ++it) {
        ++rep.iterations;
        kv.noalias() = k * v;
        // Column marginals are exact after each v-update, so the row residual
        // is the sup-norm error of the current iterate. The seeded kernel fits
        // the rows instead, so the first pass always updates.
        double err = 0.0;
        for (Index i = 0; i < n; ++i) err = std::max(err, std::abs(u(i) * kv(i) - p.weights(i)));
        rep.marginal_error = err;
        if (it > 1 && err < tol) {
            fold();
            return true;
        }
        bool degenerate = false;
        for (Index i = 0; i < n; ++i) {
            if (log_p(i) == -kInf) continue;
            if (!(kv(i) > kTinyMass)) degenerate = true;
            u(i) = p.weights(i) / kv(i);
        }
        if (!degenerate) {
            ktu.noalias() = k.transpose() * u;
            for (Index j = 0; j < m; ++j) {
                if (log_q(j) == -kInf) continue;
                if (!(ktu(j) > kTinyMass)) degenerate = true;
                v(j) = q.weights(j) / ktu(j);
            }
        }
        if (degenerate || !u.allFinite() || !v.allFinite()) {
            // Part of the kernel underflowed: redo the step exactly in log space.
            u.setOnes();
            v.setOnes();
            row_update(phi, inv_sigma, log_p, g, f);
            col_update(phi, inv_sigma, log_q, f, g);
            build_kernel(phi, inv_sigma, f, g, k);
            ++rep.kernel_rebuilds;
            continue;
        }
        const double spread = std::max(u.array().log().abs().maxCoeff(),
                                       v.array().log().abs().maxCoeff());
        if (spread > kAbsorbBound) {
            fold();
            build_kernel(phi, inv_sigma, f, g, k);
            ++rep.kernel_rebuilds;
        }
    }
    fold();
    return false;
}

// Range of phi over the atoms carrying mass.
double active_spread(const Matrix& phi, const Vector& log_p, const Vector& log_q) {
    double lo = kInf, hi = -kInf;
    for (Index j = 0; j < phi.cols(); ++j) {
        if (log_q(j) == -kInf) continue;
        for (Index i = 0; i < phi.rows(); ++i) {
            if (log_p(i) == -kInf) continue;
            lo = std::min(lo, phi(i, j));
            hi = std::max(hi, phi(i, j));
        }
    }
    return hi - lo;
}

}  // namespace

IpfpResult solve_ipfp(const Matrix& phi, double sigma, const DiscreteMarginal& p,
                      const DiscreteMarginal& q, const IpfpConfig& cfg,
                      const Potentials* warm_start) {
    cfg.validate();
    check_inputs(phi, sigma, p, q);
    if (!cfg.log_domain) return solve_plain(phi, sigma, p, q, cfg);

    const Vector log_p = log_weights(p.weights);
    const Vector log_q = log_weights(q.weights);
    const Index m = q.size();

    // Without a warm start, a kernel with a large dynamic range is approached
    // through a decreasing sequence of sigmas, each stage seeding the next.
    std::vector<double> stages{sigma};
    const bool warm = warm_start && warm_start->b.size() == m;
    if (!warm) {
        const double spread = active_spread(phi, log_p, log_q);
        while (spread / stages.back() > kContinuationRange) stages.push_back(2.0 * stages.back());
        std::reverse(stages.begin(), stages.end());
    }

    const double s0 = stages.front();
    Vector f(p.size()), g = Vector::Zero(m);
    if (warm) {
        for (Index j = 0; j < m; ++j)
            g(j) = std::isfinite(warm_start->b(j)) ? -warm_start->b(j) / s0 : 0.0;
    }
    for (Index j = 0; j < m; ++j)
        if (log_q(j) == -kInf) g(j) = -kInf;

    IterationReport rep;
    IpfpResult res;
    bool converged = false;
    bool reached_last = false;
    double units = s0;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        const bool last = s + 1 == stages.size();
        if (s > 0) g *= stages[s - 1] / stages[s];
        const int budget = cfg.max_iter - rep.iterations;
        if (budget <= 0) break;
        const double tol = last ? cfg.tol : std::max(cfg.tol, kStageTol);
        const bool ok = run_stage(phi, stages[s], p, q, log_p, log_q, tol, budget, f, g,
                                  res.coupling.pi, rep);
        units = stages[s];
        if (last) {
            converged = ok;
            reached_last = true;
        }
    }

    if (!reached_last) {
        // The budget ran out during continuation.
        f *= units / sigma;
        g *= units / sigma;
        build_kernel(phi, 1.0 / sigma, f, g, res.coupling.pi);
    }
    res.coupling.rows = p;
    res.coupling.cols = q;
    rep.marginal_error = res.coupling.marginal_error();
    res.report = rep;
    if (!converged && rep.marginal_error >= cfg.tol)
        throw NotConverged("IPFP", rep.marginal_error, rep.iterations);
    res.potentials = to_potentials(f, g, sigma, p.weights);
    return res;
}

Potentials ipfp_sweep(const Matrix& phi, double sigma, const DiscreteMarginal& p,
                      const DiscreteMarginal& q, const Potentials& current) {
    check_inputs(phi, sigma, p, q);
    if (current.a.size() != p.size() || current.b.size() != q.size())
        throw DimensionMismatch("potentials do not match marginal sizes");
    const double inv_sigma = 1.0 / sigma;
    const Vector log_p = log_weights(p.weights);
    const Vector log_q = log_weights(q.weights);
    Vector f(p.size());
    Vector g = -current.b * inv_sigma;
    for (Index j = 0; j < g.size(); ++j)
        if (!std::isfinite(current.b(j))) g(j) = -kInf;
    row_update(phi, inv_sigma, log_p, g, f);
    col_update(phi, inv_sigma, log_q, f, g);
    return to_potentials(f, g, sigma, p.weights);
}

namespace {

Index find_atom(const Matrix& support, const Vector& point, const char* side) {
    if (support.cols() != point.size())
        throw DimensionMismatch(std::string(side) + " point has the wrong dimension");
    for (Index r = 0; r < support.rows(); ++r) {
        const double scale = std::max(1.0, support.row(r).cwiseAbs().maxCoeff());
        if ((support.row(r).transpose() - point).cwiseAbs().maxCoeff() <= 1e-12 * scale) return r;
    }
    throw SupportPointNotFound(std::string(side) +
                               " point is not a support atom (interpolation is not supported)");
}

}  // namespace

double log_likelihood_density(const Coupling& coupling, const AffinityModel& model,
                              const Potentials& potentials, const Vector& x,
                              const Vector& y) {
    const Index i = find_atom(coupling.rows.support, x, "x");
    const Index j = find_atom(coupling.cols.support, y, "y");
    if (potentials.a.size() != coupling.rows.size() || potentials.b.size() != coupling.cols.size())
        throw DimensionMismatch("potentials do not match the coupling");
    return (model.utility(x, y) - potentials.a(i) - potentials.b(j)) / model.sigma;
}

std::pair<Matrix, Matrix> split_surplus(const Matrix& phi, const Potentials& potentials) {
    if (phi.rows() != potentials.a.size() || phi.cols() != potentials.b.size())
        throw DimensionMismatch("potentials do not match the utility matrix");
    Matrix u = phi;
    Matrix v = phi;
    for (Index i = 0; i < phi.rows(); ++i)
        for (Index j = 0; j < phi.cols(); ++j) {
            const double d = potentials.a(i) - potentials.b(j);
            u(i, j) = 0.5 * (phi(i, j) + d);
            v(i, j) = 0.5 * (phi(i, j) - d);
        }
    return {u, v};
}

std::pair<Matrix, Matrix> split_surplus(const AffinityModel& model, const Potentials& potentials,
                                        const DiscreteMarginal& p, const DiscreteMarginal& q) {
    return split_surplus(quadratic_utility(model.a, p.support, q.support), potentials);
}

}  // namespace affinity
