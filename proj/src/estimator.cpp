#include "affinity/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "affinity/parallel.hpp"
#include "affinity/saliency.hpp"

namespace affinity {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 50;
// Smallest inner marginal tolerance requested from the equilibrium solver.
constexpr double kInnerTolFloor = 1e-15;
constexpr int kLloydIterations = 30;
constexpr Index kAssignBlock = 256;
// The Gaussian starting point is skipped when the canonical correlations come
// this close to one.
constexpr double kMaxStartCorrelation = 0.98;

bool row_less(const Matrix& m, Index a, Index b) {
    for (Index c = 0; c < m.cols(); ++c) {
        if (m(a, c) < m(b, c)) return true;
        if (m(a, c) > m(b, c)) return false;
    }
    return false;
}

bool row_equal(const Matrix& m, Index a, Index b) {
    for (Index c = 0; c < m.cols(); ++c)
        if (m(a, c) != m(b, c)) return false;
    return true;
}

SupportSummary deduplicate(const Matrix& points) {
    const Index n = points.rows();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return row_less(points, a, b); });
    SupportSummary s;
    s.assignment.assign(static_cast<std::size_t>(n), 0);
    std::vector<Index> heads;
    std::vector<double> counts;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (k == 0 || !row_equal(points, order[k], order[k - 1])) {
            heads.push_back(order[k]);
            counts.push_back(0.0);
        }
        counts.back() += 1.0;
        s.assignment[static_cast<std::size_t>(order[k])] = static_cast<Index>(heads.size()) - 1;
    }
    const Index m = static_cast<Index>(heads.size());
    s.marginal.support.resize(m, points.cols());
    s.marginal.weights.resize(m);
    for (Index a = 0; a < m; ++a) {
        s.marginal.support.row(a) = points.row(heads[static_cast<std::size_t>(a)]);
        s.marginal.weights(a) = counts[static_cast<std::size_t>(a)] / static_cast<double>(n);
    }
    return s;
}

// Atoms from a row -> group assignment: group means, weights = group shares.
SupportSummary from_groups(const Matrix& points, const std::vector<Index>& group, Index groups) {
    const Index n = points.rows();
    Matrix sums = Matrix::Zero(groups, points.cols());
    Vector counts = Vector::Zero(groups);
    for (Index r = 0; r < n; ++r) {
        sums.row(group[static_cast<std::size_t>(r)]) += points.row(r);
        counts(group[static_cast<std::size_t>(r)]) += 1.0;
    }
    std::vector<Index> relabel(static_cast<std::size_t>(groups), -1);
    Index used = 0;
    for (Index g = 0; g < groups; ++g)
        if (counts(g) > 0) relabel[static_cast<std::size_t>(g)] = used++;
    SupportSummary s;
    s.lossy = true;
    s.marginal.support.resize(used, points.cols());
    s.marginal.weights.resize(used);
    for (Index g = 0; g < groups; ++g) {
        const Index a = relabel[static_cast<std::size_t>(g)];
        if (a < 0) continue;
        s.marginal.support.row(a) = sums.row(g) / counts(g);
        s.marginal.weights(a) = counts(g) / static_cast<double>(n);
    }
    s.assignment.resize(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r)
        s.assignment[static_cast<std::size_t>(r)] = relabel[static_cast<std::size_t>(group[static_cast<std::size_t>(r)])];
    return s;
}

SupportSummary quantile_groups(const Matrix& points, Index k) {
    const Index n = points.rows();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return points(a, 0) < points(b, 0); });
    std::vector<Index> group(static_cast<std::size_t>(n));
    for (Index pos = 0; pos < n; ++pos)
        group[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = (pos * k) / n;
    return from_groups(points, group, k);
}

// Lloyd's algorithm from k rows picked by a fixed-seed shuffle.
SupportSummary kmeans_groups(const Matrix& points, Index k) {
    const Index n = points.rows();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(0x6b6d65616e73ULL);
    std::shuffle(order.begin(), order.end(), rng);
    Matrix centers(k, points.cols());
    for (Index c = 0; c < k; ++c) centers.row(c) = points.row(order[static_cast<std::size_t>(c)]);

    std::vector<Index> group(static_cast<std::size_t>(n), 0);
    Matrix cross;
    for (int it = 0; it < kLloydIterations; ++it) {
        // Squared distances through ||x||^2 - 2 x.c + ||c||^2, one GEMM per
        // block of points; each point's distances are a contiguous column.
        const Vector cn = centers.rowwise().squaredNorm();
        bool changed = false;
        for (Index start = 0; start < n; start += kAssignBlock) {
            const Index len = std::min(kAssignBlock, n - start);
            cross.noalias() = centers * points.middleRows(start, len).transpose();
            for (Index b = 0; b < len; ++b) {
                const double* col = cross.col(b).data();
                Index best = 0;
                double bd = cn(0) - 2.0 * col[0];
                for (Index c = 1; c < k; ++c) {
                    const double d = cn(c) - 2.0 * col[c];
                    if (d < bd) {
                        bd = d;
                        best = c;
                    }
                }
                const auto r = static_cast<std::size_t>(start + b);
                if (group[r] != best || it == 0) changed = true;
                group[r] = best;
            }
        }
        if (!changed) break;
        Matrix sums = Matrix::Zero(k, points.cols());
        Vector counts = Vector::Zero(k);
        for (Index r = 0; r < n; ++r) {
            sums.row(group[static_cast<std::size_t>(r)]) += points.row(r);
            counts(group[static_cast<std::size_t>(r)]) += 1.0;
        }
        for (Index c = 0; c < k; ++c)
            if (counts(c) > 0) centers.row(c) = sums.row(c) / counts(c);
    }
    return from_groups(points, group, k);
}

double frobenius_dot(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

}  // namespace

void FitConfig::validate() const {
    if (!(moment_tol > 0.0)) throw InvalidArgument("moment_tol must be positive");
    if (max_iter < 1) throw InvalidArgument("max_iter must be at least 1");
    if (max_support < 2) throw InvalidArgument("max_support must be at least 2");
    ipfp.validate();
}

SupportSummary summarize_support(const Matrix& points, Index max_support) {
    if (points.rows() == 0) throw InvalidArgument("no points to summarize");
    SupportSummary exact = deduplicate(points);
    if (exact.marginal.size() <= max_support) return exact;
    SupportSummary grouped = points.cols() == 1 ? quantile_groups(points, max_support)
                                                : kmeans_groups(points, max_support);
    // Recenter so the summarized marginal keeps mean zero exactly.
    const Vector mean = grouped.marginal.mean();
    grouped.marginal.support.rowwise() -= mean.transpose();
    return grouped;
}

namespace {

// Affinity of the Gaussian market with the sample's second moments: exact
// for Gaussian attributes and a close start otherwise. Falls back to the
// cross-covariance when the moments are near-degenerate.
Matrix gaussian_start(const Matrix& x, const Matrix& y, const Matrix& c) {
    const double n = static_cast<double>(x.rows());
    const Matrix sxx = x.transpose() * x / n;
    const Matrix syy = y.transpose() * y / n;
    const Eigen::LLT<Matrix> lx(sxx);
    const Eigen::LLT<Matrix> ly(syy);
    if (lx.info() != Eigen::Success || ly.info() != Eigen::Success) return c;
    const Matrix r = lx.matrixL().solve(ly.matrixL().solve(c.transpose()).transpose());
    const Eigen::JacobiSVD<Matrix> svd(r);
    if (!(svd.singularValues().maxCoeff() < kMaxStartCorrelation)) return c;
    const Matrix sx_c = lx.solve(c);
    const Matrix schur = syy - c.transpose() * sx_c;
    return sx_c * schur.llt().solve(Matrix::Identity(c.cols(), c.cols()));
}

}  // namespace

FitResult fit_affinity(const MatchedSample& sample, const FitConfig& cfg) {
    cfg.validate();
    sample.validate();
    const Index n = sample.size();
    const Index dx = sample.dim_x();
    const Index dy = sample.dim_y();

    FitResult res;
    res.n = n;
    // Newton runs on attributes in standard-deviation units, which makes the
    // iteration path independent of the measurement units; B, the moments and
    // the coupling are mapped back to the original units.
    auto unit_scale = [](const Matrix& m) {
        Vector sd = column_variances(m).cwiseSqrt();
        for (Index k = 0; k < sd.size(); ++k)
            if (!(sd(k) > 0.0)) sd(k) = 1.0;
        return sd;
    };
    const Vector sd_x = unit_scale(sample.x);
    const Vector sd_y = unit_scale(sample.y);
    const Matrix x = centered(sample.x) * sd_x.cwiseInverse().asDiagonal();
    const Matrix y = centered(sample.y) * sd_y.cwiseInverse().asDiagonal();
    auto to_raw_moment = [&](const Matrix& m) -> Matrix { return sd_x.asDiagonal() * m * sd_y.asDiagonal(); };
    const Matrix sigma_std = x.transpose() * y / static_cast<double>(n);
    res.sigma_xy = to_raw_moment(sigma_std);
    FitReport& rep = res.report;
    if (n <= dx * dy)
        rep.warnings.push_back("sample size does not exceed the number of affinity parameters");

    const SupportSummary sx = summarize_support(x, cfg.max_support);
    const SupportSummary sy = summarize_support(y, cfg.max_support);
    const DiscreteMarginal& p = sx.marginal;
    const DiscreteMarginal& q = sy.marginal;
    rep.compressed = sx.lossy || sy.lossy;
    rep.support_x = p.size();
    rep.support_y = q.size();
    if (rep.compressed)
        rep.warnings.push_back("supports were summarized to at most " +
                               std::to_string(cfg.max_support) + " atoms per side");

    // The gradient sums marginal errors over the support, so the inner
    // tolerance scales with the support size.
    IpfpConfig inner = cfg.ipfp;
    // The moment gap is measured in the original units.
    const double unit_ratio = std::max(1.0, sd_x.maxCoeff() * sd_y.maxCoeff());
    const double scale = std::max<double>(static_cast<double>(std::max(p.size(), q.size())), 1.0) *
                         std::max(1.0, x.cwiseAbs().maxCoeff() * y.cwiseAbs().maxCoeff()) * unit_ratio;
    inner.tol = std::min(cfg.ipfp.tol, std::max(1e-2 * cfg.moment_tol / scale, kInnerTolFloor));

    auto objective = [&](const WelfareEvaluation& ev, const Matrix& b) {
        return ev.value - frobenius_dot(b, sigma_std);
    };
    auto raw_gap = [&](const Matrix& g) { return to_raw_moment(g - sigma_std).cwiseAbs().maxCoeff(); };

    Matrix b = Matrix::Zero(dx, dy);
    if (sigma_std.cwiseAbs().maxCoeff() == 0.0) {
        rep.degenerate = true;
        rep.warnings.push_back("cross-covariance is identically zero; independence (B = 0) returned");
    } else {
        b = gaussian_start(x, y, sigma_std);
    }

    WelfareEvaluation ev = evaluate_welfare(b, p, q, inner);
    rep.inner_iterations += ev.report.iterations;
    double obj = objective(ev, b);
    rep.objective_trace.push_back(obj);
    Matrix grad = ev.gradient - sigma_std;
    rep.moment_gap = raw_gap(ev.gradient);

    // Centering solutions carry over between nearby couplings.
    Matrix beta = Matrix::Zero(q.size(), dx * dy);
    while (!rep.degenerate && rep.moment_gap >= cfg.moment_tol) {
        if (rep.iterations >= cfg.max_iter)
            throw NotConverged("moment matching", rep.moment_gap, rep.iterations);
        ++rep.iterations;

        // Newton direction from the Fisher information; the centering only
        // needs to be as accurate as the current step.
        CenteringConfig centering = cfg.centering;
        centering.tol = std::max(cfg.centering.tol, std::min(1e-6, 1e-3 * rep.moment_gap));
        const ScoreFunctions scores = score_functions(ev.coupling, centering, beta);
        beta = scores.beta;
        const DoublyIndexedMatrix f = fisher_information(ev.coupling, scores);
        const Matrix hs = 0.5 * (f.data + f.data.transpose());
        const Eigen::SelfAdjointEigenSolver<Matrix> es(hs);
        const Vector g = vectorize(grad);
        Vector dir;
        if (es.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
            dir = -(es.eigenvectors() *
                    (es.eigenvectors().transpose() * g).cwiseQuotient(es.eigenvalues()));
        } else {
            dir = -g;
            rep.warnings.push_back("Fisher information near-singular; gradient step taken");
        }
        const Matrix step = unvectorize(dir, dx, dy);
        const double slope = g.dot(dir);

        double t = 1.0;
        bool accepted = false;
        for (int h = 0; h < kMaxHalvings; ++h, t *= 0.5) {
            const Matrix bn = b + t * step;
            WelfareEvaluation evn = evaluate_welfare(bn, p, q, inner, &ev.potentials);
            rep.inner_iterations += evn.report.iterations;
            const double objn = objective(evn, bn);
            if (objn <= obj + kArmijo * t * slope) {
                b = bn;
                ev = std::move(evn);
                obj = objn;
                accepted = true;
                break;
            }
            // Near the optimum the objective change drops below its numerical
            // resolution; accept a step that reduces the moment gap instead.
            const double gapn = raw_gap(evn.gradient);
            if (objn <= obj + 1e-12 * std::max(1.0, std::abs(obj)) && gapn < rep.moment_gap) {
                b = bn;
                ev = std::move(evn);
                obj = std::min(obj, objn);
                accepted = true;
                break;
            }
        }
        if (!accepted) throw NotConverged("moment matching line search", rep.moment_gap, rep.iterations);
        rep.objective_trace.push_back(obj);
        grad = ev.gradient - sigma_std;
        rep.moment_gap = raw_gap(ev.gradient);
    }

    rep.b_hat = sd_x.cwiseInverse().asDiagonal() * b * sd_y.cwiseInverse().asDiagonal();
    res.model = AffinityModel::from_b(rep.b_hat);
    res.coupling = std::move(ev.coupling);
    res.coupling.rows.support = res.coupling.rows.support * sd_x.asDiagonal();
    res.coupling.cols.support = res.coupling.cols.support * sd_y.asDiagonal();
    res.potentials = std::move(ev.potentials);
    if (cfg.compute_fisher) {
        for (Index i = 0; i < dx; ++i)
            for (Index j = 0; j < dy; ++j) beta.col(flatten(i, j, dy)) *= sd_x(i) * sd_y(j);
        res.fisher = fisher_information(res.coupling, score_functions(res.coupling, cfg.centering, beta));
    }
    return res;
}

BootstrapResult bootstrap_fit(const MatchedSample& sample, Index reps, std::uint64_t seed,
                              const FitConfig& cfg) {
    if (reps < 1) throw InvalidArgument("bootstrap needs at least one replicate");
    sample.validate();
    const Index n = sample.size();
    const auto count = static_cast<std::size_t>(reps);
    FitConfig rcfg = cfg;
    rcfg.compute_fisher = false;

    std::vector<Matrix> b_slot(count), a_slot(count);
    std::vector<Vector> share_slot(count);
    std::vector<std::string> error_slot(count);
    std::vector<char> ok(count, 0);

    parallel_for(count, [&](std::size_t r) {
        std::mt19937_64 rng(derive_seed(seed, r));
        std::uniform_int_distribution<Index> pick(0, n - 1);
        MatchedSample draw = sample;
        for (Index k = 0; k < n; ++k) {
            const Index src = pick(rng);
            draw.x.row(k) = sample.x.row(src);
            draw.y.row(k) = sample.y.row(src);
        }
        try {
            const FitResult fit = fit_affinity(draw, rcfg);
            b_slot[r] = fit.report.b_hat;
            a_slot[r] = fit.model.a;
            share_slot[r] =
                saliency(fit.report.b_hat, column_variances(draw.x), column_variances(draw.y)).shares;
            ok[r] = 1;
        } catch (const std::exception& e) {
            error_slot[r] = e.what();
        }
    });

    BootstrapResult out;
    out.reps = reps;
    for (std::size_t r = 0; r < count; ++r) {
        if (ok[r]) {
            out.b_draws.push_back(b_slot[r]);
            out.a_draws.push_back(a_slot[r]);
            out.share_draws.push_back(share_slot[r]);
        } else {
            out.failures.push_back({static_cast<Index>(r), error_slot[r]});
        }
    }
    auto summarize = [](const auto& draws, auto& mean, auto& sd, Index rows, Index cols) {
        mean = std::decay_t<decltype(mean)>::Zero(rows, cols);
        sd = std::decay_t<decltype(sd)>::Zero(rows, cols);
        const double r = static_cast<double>(draws.size());
        if (draws.empty()) return;
        for (const auto& d : draws) mean += d;
        mean /= r;
        if (draws.size() < 2) return;
        for (const auto& d : draws) sd += (d - mean).cwiseAbs2();
        sd = (sd / (r - 1.0)).cwiseSqrt();
    };
    const Index dx = sample.dim_x(), dy = sample.dim_y();
    summarize(out.b_draws, out.b_mean, out.b_std, dx, dy);
    summarize(out.a_draws, out.a_mean, out.a_std, dx, dy);
    summarize(out.share_draws, out.share_mean, out.share_std, std::min(dx, dy), 1);
    return out;
}

}  // namespace affinity
