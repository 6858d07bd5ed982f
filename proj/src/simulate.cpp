#include "affinity/simulate.hpp"

#include <cmath>
#include <random>

#include "affinity/parallel.hpp"

namespace affinity {

namespace {

// Alternating sweeps before the Newton phase of the Choo-Siow solver.
constexpr int kChooSiowSweeps = 200;

}  // namespace

double gaussian_slope(double sigma) {
    if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be nonnegative");
    return std::sqrt(0.25 * sigma * sigma + 1.0) - 0.5 * sigma;
}

MatchedSample simulate_gaussian_1d(double sigma, Index n, std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("n must be at least 1");
    const double t = gaussian_slope(sigma);
    const double s = std::sqrt(std::max(0.0, 1.0 - t * t));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Matrix x(n, 1), y(n, 1);
    for (Index k = 0; k < n; ++k) {
        x(k, 0) = nd(rng);
        y(k, 0) = t * x(k, 0) + s * nd(rng);
    }
    return MatchedSample::make(std::move(x), std::move(y));
}

Matrix gaussian_cross_covariance(const Matrix& b) {
    if (b.size() == 0) throw InvalidArgument("empty affinity matrix");
    const Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& sv = svd.singularValues();
    Matrix c = Matrix::Zero(b.rows(), b.cols());
    for (Index k = 0; k < sv.size(); ++k) {
        const double bk = sv(k);
        const double ck = bk > 0.0 ? (std::sqrt(1.0 + 4.0 * bk * bk) - 1.0) / (2.0 * bk) : 0.0;
        c += ck * svd.matrixU().col(k) * svd.matrixV().col(k).transpose();
    }
    return c;
}

MatchedSample simulate_gaussian(const GaussianQuadraticSpec& spec) {
    if (spec.n < 1) throw InvalidArgument("n must be at least 1");
    const Matrix c = gaussian_cross_covariance(spec.b);
    const Index dx = c.rows();
    const Index dy = c.cols();
    const Matrix resid_cov = Matrix::Identity(dy, dy) - c.transpose() * c;
    // Cholesky-like factor through the eigen-decomposition, which tolerates
    // a semidefinite residual covariance.
    const Eigen::SelfAdjointEigenSolver<Matrix> es(resid_cov);
    const Matrix l = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> nd;
    Matrix x(spec.n, dx), eps(spec.n, dy);
    for (Index k = 0; k < spec.n; ++k) {
        for (Index i = 0; i < dx; ++i) x(k, i) = nd(rng);
        for (Index j = 0; j < dy; ++j) eps(k, j) = nd(rng);
    }
    Matrix y = x * c + eps * l.transpose();
    return MatchedSample::make(std::move(x), std::move(y));
}

ChoiceSimulation simulate_poisson_logit_choice(const PoissonLogitSpec& spec, Index trials) {
    if (!spec.utility) throw InvalidArgument("utility function is required");
    if (!(spec.upper > spec.lower)) throw InvalidArgument("empty choice domain");
    if (trials < 1) throw InvalidArgument("trials must be at least 1");
    if (spec.max_retries < 0) throw InvalidArgument("max_retries must be nonnegative");
    const double width = spec.upper - spec.lower;
    const double eps0 = std::isnan(spec.epsilon_min) ? std::log(width / 50.0) : spec.epsilon_min;

    const auto count = static_cast<std::size_t>(trials);
    ChoiceSimulation out;
    out.choices.assign(count, 0.0);
    out.max_values.assign(count, 0.0);
    std::vector<long> retries(count, 0);

    parallel_for(count, [&](std::size_t trial) {
        std::mt19937_64 rng(derive_seed(spec.seed, trial));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::exponential_distribution<double> expo(1.0);
        double best = -std::numeric_limits<double>::infinity();
        double choice = 0.0;
        auto offer = [&](double eps) {
            const double y = spec.lower + width * unif(rng);
            const double u = spec.utility(y);
            if (u > spec.utility_bound + 1e-12)
                throw InvalidArgument("utility exceeds the declared upper bound");
            if (u + eps > best) {
                best = u + eps;
                choice = y;
            }
        };
        // Marks above the truncation level: Poisson count, eps = level + Exp(1).
        double level = eps0;
        {
            std::poisson_distribution<long> pois(width * std::exp(-level));
            for (long k = pois(rng); k > 0; --k) offer(level + expo(rng));
        }
        long lowered = 0;
        // Every unseen point has eps <= level, hence value <= bound + level.
        while (!(best > spec.utility_bound + level)) {
            if (lowered >= spec.max_retries)
                throw NoAcquaintance("no acquaintance above the truncation level after " +
                                     std::to_string(lowered) + " retries");
            std::poisson_distribution<long> pois(width * (std::exp(-(level - 1.0)) - std::exp(-level)));
            for (long k = pois(rng); k > 0; --k) {
                // Band (level - 1, level] with density proportional to exp(-eps).
                const double s = std::log1p(unif(rng) * (std::exp(1.0) - 1.0));
                offer(level - s);
            }
            level -= 1.0;
            ++lowered;
        }
        out.choices[trial] = choice;
        out.max_values[trial] = best;
        retries[trial] = lowered;
    });
    for (long r : retries) out.retries += r;
    return out;
}

ChooSiowEquilibrium solve_choo_siow(const Matrix& surplus, const Vector& men, const Vector& women,
                                    double sigma, double tol, int max_iter) {
    if (surplus.rows() != men.size() || surplus.cols() != women.size())
        throw DimensionMismatch("surplus table does not match the type masses");
    if (!(men.array() > 0.0).all() || !(women.array() > 0.0).all())
        throw InvalidArgument("type masses must be positive");
    if (!(sigma > 0.0)) throw InvalidArgument("sigma must be positive");
    if (!surplus.allFinite()) throw InvalidArgument("surplus must be finite");
    const Matrix k = (surplus / sigma).array().exp().matrix();
    // s = sqrt(mu(x, 0)), r = sqrt(mu(0, y)); men(x) = s^2 + s (K r)(x).
    Vector s = men.cwiseSqrt();
    Vector r = women.cwiseSqrt();
    auto solve_side = [](const Vector& load, const Vector& mass) {
        Vector out(mass.size());
        for (Index i = 0; i < mass.size(); ++i)
            out(i) = 2.0 * mass(i) / (load(i) + std::sqrt(load(i) * load(i) + 4.0 * mass(i)));
        return out;
    };
    const Index tx = men.size(), ty = women.size();
    // Relative violation of both adding-up constraints.
    auto residual = [&](const Vector& sv, const Vector& rv) {
        Vector out(tx + ty);
        out.head(tx) = (sv.cwiseProduct(sv) + sv.cwiseProduct(k * rv) - men).cwiseQuotient(men);
        out.tail(ty) = (rv.cwiseProduct(rv) + rv.cwiseProduct(k.transpose() * sv) - women).cwiseQuotient(women);
        return out;
    };
    int it = 0;
    double err = std::numeric_limits<double>::infinity();
    // Alternating exact updates first; they stall when singles become rare,
    // so the remainder is a damped Newton solve in log(s), log(r).
    for (; it < std::min(max_iter, kChooSiowSweeps) && err > tol; ++it) {
        s = solve_side(k * r, men);
        r = solve_side(k.transpose() * s, women);
        err = residual(s, r).cwiseAbs().maxCoeff();
    }
    for (; it < max_iter && err > tol; ++it) {
        const Vector kr = k * r, ks = k.transpose() * s;
        Matrix jac = Matrix::Zero(tx + ty, tx + ty);
        for (Index i = 0; i < tx; ++i) {
            jac(i, i) = s(i) * (2.0 * s(i) + kr(i)) / men(i);
            for (Index j = 0; j < ty; ++j) jac(i, tx + j) = s(i) * k(i, j) * r(j) / men(i);
        }
        for (Index j = 0; j < ty; ++j) {
            jac(tx + j, tx + j) = r(j) * (2.0 * r(j) + ks(j)) / women(j);
            for (Index i = 0; i < tx; ++i) jac(tx + j, i) = r(j) * k(i, j) * s(i) / women(j);
        }
        const Vector step = -jac.partialPivLu().solve(residual(s, r));
        if (!step.allFinite()) break;
        bool improved = false;
        for (double t = 1.0; t > 1e-10; t *= 0.5) {
            const Vector sn = s.cwiseProduct((t * step.head(tx)).array().exp().matrix());
            const Vector rn = r.cwiseProduct((t * step.tail(ty)).array().exp().matrix());
            const double errn = residual(sn, rn).cwiseAbs().maxCoeff();
            if (errn < err) {
                s = sn;
                r = rn;
                err = errn;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    if (err > tol) throw NotConverged("Choo-Siow equilibrium", err, it);
    ChooSiowEquilibrium eq;
    eq.matched = s.asDiagonal() * k * r.asDiagonal();
    eq.single_x = s.cwiseProduct(s);
    eq.single_y = r.cwiseProduct(r);
    return eq;
}

PopulationWithSingles simulate_discrete_choo_siow(const DiscreteMarketSpec& spec) {
    const Index tx = spec.men.size();
    const Index ty = spec.women.size();
    if (spec.types_x.rows() != tx || spec.types_y.rows() != ty)
        throw DimensionMismatch("type attribute tables do not match the type masses");
    const ChooSiowEquilibrium eq = solve_choo_siow(spec.surplus, spec.men, spec.women, spec.sigma);

    // Categories: couples (x, y) row-major, then single men, then single women.
    std::vector<double> weights;
    weights.reserve(static_cast<std::size_t>(tx * ty + tx + ty));
    for (Index i = 0; i < tx; ++i)
        for (Index j = 0; j < ty; ++j) weights.push_back(eq.matched(i, j));
    for (Index i = 0; i < tx; ++i) weights.push_back(eq.single_x(i));
    for (Index j = 0; j < ty; ++j) weights.push_back(eq.single_y(j));
    double total = 0.0;
    for (double w : weights) total += w;
    const Index households = spec.households > 0 ? spec.households : std::llround(total);
    if (households < 1) throw InvalidArgument("market has no households");

    std::mt19937_64 rng(spec.seed);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::vector<Index> counts(weights.size(), 0);
    for (Index h = 0; h < households; ++h) ++counts[pick(rng)];

    Index couples = 0, sx = 0, sy = 0;
    for (Index c = 0; c < tx * ty; ++c) couples += counts[static_cast<std::size_t>(c)];
    for (Index i = 0; i < tx; ++i) sx += counts[static_cast<std::size_t>(tx * ty + i)];
    for (Index j = 0; j < ty; ++j) sy += counts[static_cast<std::size_t>(tx * ty + tx + j)];

    Matrix mx(couples, spec.types_x.cols()), my(couples, spec.types_y.cols());
    Index row = 0;
    for (Index i = 0; i < tx; ++i)
        for (Index j = 0; j < ty; ++j)
            for (Index k = 0; k < counts[static_cast<std::size_t>(i * ty + j)]; ++k, ++row) {
                mx.row(row) = spec.types_x.row(i);
                my.row(row) = spec.types_y.row(j);
            }
    PopulationWithSingles pop;
    pop.matched = MatchedSample::make(std::move(mx), std::move(my));
    pop.singles_x.resize(sx, spec.types_x.cols());
    pop.singles_y.resize(sy, spec.types_y.cols());
    row = 0;
    for (Index i = 0; i < tx; ++i)
        for (Index k = 0; k < counts[static_cast<std::size_t>(tx * ty + i)]; ++k)
            pop.singles_x.row(row++) = spec.types_x.row(i);
    row = 0;
    for (Index j = 0; j < ty; ++j)
        for (Index k = 0; k < counts[static_cast<std::size_t>(tx * ty + tx + j)]; ++k)
            pop.singles_y.row(row++) = spec.types_y.row(j);
    return pop;
}

}  // namespace affinity
