// Acceptance runner: one PASS / FAIL line per criterion. With no arguments
// every criterion runs; otherwise only the named ones (AC1 .. AC10).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "affinity/estimator.hpp"
#include "affinity/inference.hpp"
#include "affinity/io.hpp"
#include "affinity/parallel.hpp"
#include "affinity/pipeline.hpp"
#include "affinity/saliency.hpp"
#include "affinity/schrodinger.hpp"
#include "affinity/simulate.hpp"
#include "affinity/singles.hpp"
#include "affinity/stats.hpp"
#include "affinity/welfare.hpp"
#include "../unit/helpers.hpp"

using namespace affinity;
using namespace testing_helpers;
namespace fs = std::filesystem;

namespace {

std::string cli_path;

struct Outcome {
    bool pass = true;
    std::vector<std::string> lines;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        lines.push_back(std::string(ok ? "  ok   " : "  FAIL ") + what);
    }
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string fmt(const char* f, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- AC1

Outcome ac1() {
    Outcome o;
    std::mt19937_64 rng(101);
    for (int inst = 0; inst < 6; ++inst) {
        const double sigma = inst % 2 == 0 ? 1.0 : 0.25;
        const DiscreteMarginal p = random_marginal(200, 2, rng);
        const DiscreteMarginal q = random_marginal(200, 2, rng);
        const Matrix phi = random_matrix(200, 200, rng);
        const auto t0 = std::chrono::steady_clock::now();
        IpfpConfig cfg;
        cfg.tol = 1e-10;
        cfg.max_iter = 10000;
        const IpfpResult r = solve_ipfp(phi, sigma, p, q, cfg);
        const double secs = seconds_since(t0);
        const double row_err = (r.coupling.row_sums() - p.weights).cwiseAbs().maxCoeff();
        const double col_err = (r.coupling.col_sums() - q.weights).cwiseAbs().maxCoeff();
        double fact = 0.0;
        for (Index j = 0; j < 200; ++j)
            for (Index i = 0; i < 200; ++i) {
                const double model = std::exp((phi(i, j) - r.potentials.a(i) - r.potentials.b(j)) / sigma);
                fact = std::max(fact, std::abs(model - r.coupling.pi(i, j)) / r.coupling.pi(i, j));
            }
        std::ostringstream what;
        what << "instance " << inst << " sigma " << sigma << ": iterations " << r.report.iterations
             << ", marginal errors " << fmt("%.2e / %.2e", row_err, col_err) << ", factorization "
             << fmt("%.2e", fact) << ", " << fmt("%.3f s", secs);
        o.check(row_err < 1e-9 && col_err < 1e-9 && r.report.iterations <= 10000 && fact < 1e-8 && secs < 5.0,
                what.str());
    }
    return o;
}

// ---------------------------------------------------------------- AC2

double grid_slope(Index m, double half_width, double sigma) {
    const DiscreteMarginal g = normal_grid(m, half_width);
    const Matrix phi = quadratic_utility(Matrix::Constant(1, 1, 1.0), g.support, g.support);
    IpfpConfig cfg;
    cfg.max_iter = 1000000;
    return conditional_mean_slope(solve_ipfp(phi, sigma, g, g, cfg).coupling);
}

Outcome ac2() {
    Outcome o;
    const double t = gaussian_slope(1.0);
    o.check(std::abs(t - 0.618034) < 1e-6, fmt("closed form t = %.6f", t));
    double previous = INFINITY;
    bool shrinking = true;
    for (Index m : {7, 11, 21, 101}) {
        const double err = std::abs(grid_slope(m, 6.0, 1.0) - t);
        o.check(err < 1e-2 || m < 21, "grid " + std::to_string(m) + " points: |slope - t| = " + fmt("%.3e", err));
        shrinking = shrinking && (err <= previous || err < 1e-9);
        previous = err;
    }
    o.check(shrinking, "grid error does not grow under refinement");
    const double sorted = grid_slope(201, 6.0, 0.01);
    const double indep = grid_slope(201, 6.0, 100.0);
    o.check(sorted > 0.99, fmt("sigma = 0.01: slope %.6f > 0.99", sorted));
    o.check(indep < 0.02, fmt("sigma = 100: slope %.6f < 0.02", indep));
    return o;
}

// ---------------------------------------------------------------- AC3

Outcome ac3() {
    Outcome o;
    const MatchedSample s = simulate_gaussian_1d(1.0, 50000, 103);
    const auto t0 = std::chrono::steady_clock::now();
    const FitResult fit = fit_affinity(s);
    const double secs = seconds_since(t0);
    const double b = fit.report.b_hat(0, 0);
    o.check(b >= 0.95 && b <= 1.05, fmt("B-hat = %.5f in [0.95, 1.05]", b));
    o.check(fit.report.moment_gap < 1e-6, fmt("moment gap %.2e < 1e-6", fit.report.moment_gap));
    o.check(secs < 120.0, fmt("fit time %.2f s < 120 s", secs));
    return o;
}

// ---------------------------------------------------------------- AC4

IpfpConfig tight() {
    IpfpConfig c;
    c.tol = 1e-13;
    c.max_iter = 100000;
    return c;
}

Outcome ac4() {
    Outcome o;
    std::mt19937_64 rng(104);
    for (int inst = 0; inst < 3; ++inst) {
        const DiscreteMarginal p = random_marginal(30, 3, rng);
        const DiscreteMarginal q = random_marginal(30, 3, rng);
        const Matrix b = random_matrix(3, 3, rng, 0.5);
        const WelfareEvaluation ev = evaluate_welfare(b, p, q, tight());

        const double h = 1e-5;
        Matrix fd_grad(3, 3);
        for (Index i = 0; i < 3; ++i)
            for (Index j = 0; j < 3; ++j) {
                Matrix bp = b, bm = b;
                bp(i, j) += h;
                bm(i, j) -= h;
                fd_grad(i, j) = (evaluate_welfare(bp, p, q, tight()).value -
                                 evaluate_welfare(bm, p, q, tight()).value) /
                                (2 * h);
            }
        const double grad_err = (fd_grad - ev.gradient).norm() / ev.gradient.norm();

        const DoublyIndexedMatrix f = fisher_information(ev.coupling);
        Matrix fd_hess(9, 9);
        const double hh = 1e-4;
        for (Index k = 0; k < 3; ++k)
            for (Index l = 0; l < 3; ++l) {
                Matrix bp = b, bm = b;
                bp(k, l) += hh;
                bm(k, l) -= hh;
                const Matrix col = (evaluate_welfare(bp, p, q, tight()).gradient -
                                    evaluate_welfare(bm, p, q, tight()).gradient) /
                                   (2 * hh);
                for (Index i = 0; i < 3; ++i)
                    for (Index j = 0; j < 3; ++j) fd_hess(flatten(i, j, 3), flatten(k, l, 3)) = col(i, j);
            }
        const double hess_err = (fd_hess - f.data).norm() / f.data.norm();
        const double asym = (f.data - f.data.transpose()).cwiseAbs().maxCoeff();
        const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (f.data + f.data.transpose()));
        const double min_eig = es.eigenvalues().minCoeff();

        std::ostringstream what;
        what << "instance " << inst << ": gradient rel. error " << fmt("%.2e", grad_err) << ", Fisher rel. error "
             << fmt("%.2e", hess_err) << ", asymmetry " << fmt("%.1e", asym) << ", min eigenvalue "
             << fmt("%.3e", min_eig);
        o.check(grad_err < 1e-4 && hess_err < 1e-3 && asym < 1e-9 && min_eig > -1e-9, what.str());
    }
    return o;
}

// ---------------------------------------------------------------- AC5

Outcome ac5() {
    Outcome o;
    Matrix a(2, 2);
    a << 0, 4, -1, 0;
    const SaliencyResult s = saliency(a, Vector::Ones(2), Vector::Ones(2));
    Matrix v(2, 2);
    v << 0, 1, -1, 0;
    o.check(std::abs(s.lambda(0) - 4.0) < 1e-12 && std::abs(s.lambda(1) - 1.0) < 1e-12,
            fmt("Lambda = diag(%.12g, %.12g)", s.lambda(0), s.lambda(1)));
    o.check((s.u - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12, "U = I");
    o.check((s.v - v).cwiseAbs().maxCoeff() < 1e-12, "V = [[0, 1], [-1, 0]]");
    const double recon = (s.u.transpose() * s.lambda_matrix() * s.v - a).cwiseAbs().maxCoeff();
    const double diag = (s.u * a * s.v.transpose() - s.lambda_matrix()).cwiseAbs().maxCoeff();
    o.check(recon < 1e-10, fmt("reconstruction error %.1e", recon));
    o.check(diag < 1e-10, fmt("diagonalization error %.1e", diag));
    o.check(std::abs(s.shares(0) - 0.8) < 1e-12 && std::abs(s.shares(1) - 0.2) < 1e-12,
            fmt("shares (%.12g, %.12g)", s.shares(0), s.shares(1)));
    return o;
}

// ---------------------------------------------------------------- AC6

Outcome ac6() {
    Outcome o;
    FitConfig cfg;
    cfg.moment_tol = 1e-9;
    cfg.ipfp.tol = 1e-12;
    std::mt19937_64 rng(106);
    std::uniform_real_distribution<double> ud(0.2, 5.0);
    Matrix b(2, 3);
    b << 0.8, 0.3, 0.0, -0.2, 0.5, 0.1;
    const MatchedSample s = simulate_gaussian({b, 500, 107});
    const FitResult base = fit_affinity(s, cfg);

    for (int rep = 0; rep < 3; ++rep) {
        Vector m(2), n(3);
        for (Index i = 0; i < 2; ++i) m(i) = ud(rng);
        for (Index j = 0; j < 3; ++j) n(j) = ud(rng);
        MatchedSample scaled = s;
        scaled.x = s.x * m.asDiagonal();
        scaled.y = s.y * n.asDiagonal();
        const FitResult fit = fit_affinity(scaled, cfg);
        const Matrix expect = m.cwiseInverse().asDiagonal() * base.report.b_hat * n.cwiseInverse().asDiagonal();
        const double err = (fit.report.b_hat - expect).cwiseAbs().maxCoeff();
        o.check(err < 1e-6, fmt("rescaling %.0f: sup-norm deviation %.2e", rep, err));
    }

    for (int rep = 0; rep < 3; ++rep) {
        const Matrix a = random_matrix(3, 3, rng);
        Vector sx(3), sy(3), dx(3), dy(3);
        for (Index i = 0; i < 3; ++i) {
            sx(i) = ud(rng);
            sy(i) = ud(rng);
            dx(i) = ud(rng);
            dy(i) = ud(rng);
        }
        const SaliencyResult s1 = saliency(a, sx, sy);
        const SaliencyResult s2 = saliency(dx.cwiseInverse().asDiagonal() * a * dy.cwiseInverse().asDiagonal(),
                                           sx.cwiseProduct(dx.cwiseAbs2()), sy.cwiseProduct(dy.cwiseAbs2()));
        const double dl = (s1.lambda - s2.lambda).cwiseAbs().maxCoeff();
        const double ds = (s1.shares - s2.shares).cwiseAbs().maxCoeff();
        o.check(dl < 1e-8 && ds < 1e-8, fmt("unit change: Lambda moves %.1e, shares move %.1e", dl, ds));
    }

    MatchedSample flipped = s;
    flipped.x.col(0) = -s.x.col(0);
    Matrix expect = base.report.b_hat;
    expect.row(0) *= -1.0;
    const double flip_err = (fit_affinity(flipped, cfg).report.b_hat - expect).cwiseAbs().maxCoeff();
    o.check(flip_err < 1e-6, fmt("sign flip of x1 negates row 1 of B-hat: deviation %.2e", flip_err));
    MatchedSample both = s;
    both.x = -s.x;
    both.y = -s.y;
    const double both_err = (fit_affinity(both, cfg).report.b_hat - base.report.b_hat).cwiseAbs().maxCoeff();
    o.check(both_err < 1e-6, fmt("negating all attributes leaves B-hat unchanged: deviation %.2e", both_err));
    return o;
}

// ---------------------------------------------------------------- AC7

struct RankDraw {
    double statistic = 0.0;
    double p_value = 1.0;
    bool ok = false;
};

std::vector<RankDraw> rank_draws(const Matrix& b, Index reps, Index n, std::uint64_t master) {
    std::vector<RankDraw> out(static_cast<std::size_t>(reps));
    parallel_for(out.size(), [&](std::size_t r) {
        try {
            const MatchedSample s = standardize(simulate_gaussian({b, n, derive_seed(master, r)})).first;
            const FitResult fit = fit_affinity(s);
            const AsymptoticCovariance c = asymptotic_covariance(s, fit.report.b_hat, fit.coupling, {}, &fit.fisher);
            const RankTestResult t = rank_test(c.theta, c.v_theta, s.size(), 1);
            out[r] = {t.statistic, t.p_value, true};
        } catch (const Error&) {
        }
    });
    return out;
}

Outcome ac7() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    Matrix null_b = Matrix::Zero(3, 3);
    null_b(0, 0) = 1.0;
    const std::vector<RankDraw> null = rank_draws(null_b, 500, 2000, 107);
    Index used = 0, rejected = 0;
    double sum = 0.0;
    for (const RankDraw& d : null) {
        if (!d.ok) continue;
        ++used;
        sum += d.statistic;
        if (d.p_value < 0.05) ++rejected;
    }
    const double rate = static_cast<double>(rejected) / static_cast<double>(used);
    const double mean = sum / static_cast<double>(used);
    o.check(used == 500, "null replicates completed: " + std::to_string(used) + " / 500");
    o.check(rate >= 0.02 && rate <= 0.10, fmt("null rejection rate %.3f in [0.02, 0.10]", rate));
    o.check(std::abs(mean - 4.0) <= 0.6, fmt("mean statistic %.3f within 15%% of df = 4", mean));

    Matrix alt_b = Matrix::Zero(3, 3);
    alt_b.diagonal() << 1.0, 0.3, 0.2;
    const std::vector<RankDraw> alt = rank_draws(alt_b, 100, 2000, 108);
    Index alt_used = 0, alt_rej = 0;
    for (const RankDraw& d : alt) {
        if (!d.ok) continue;
        ++alt_used;
        if (d.p_value < 0.05) ++alt_rej;
    }
    const double power = static_cast<double>(alt_rej) / static_cast<double>(alt_used);
    o.check(power > 0.90, fmt("power against B = diag(1, 0.3, 0.2): %.3f > 0.90", power));
    const double secs = seconds_since(t0);
    o.check(secs < 1800.0, fmt("runtime %.0f s < 1800 s", secs));
    return o;
}

// ---------------------------------------------------------------- AC8

Outcome ac8() {
    Outcome o;
    const auto u = [](double y) { return 1.5 * std::sin(2.0 * M_PI * y); };
    PoissonLogitSpec spec;
    spec.utility = u;
    spec.utility_bound = 1.5;
    spec.seed = 108;
    const Index trials = 100000;
    const ChoiceSimulation r = simulate_poisson_logit_choice(spec, trials);

    // Bin probabilities of the density exp U / integral exp U by Simpson's rule.
    const int bins = 20;
    const int sub = 200;
    std::vector<double> mass(bins, 0.0);
    for (int k = 0; k < bins; ++k) {
        const double lo = static_cast<double>(k) / bins, h = 1.0 / bins / sub;
        double acc = 0.0;
        for (int s = 0; s <= sub; ++s) {
            const double w = (s == 0 || s == sub) ? 1.0 : (s % 2 == 1 ? 4.0 : 2.0);
            acc += w * std::exp(u(lo + s * h));
        }
        mass[static_cast<std::size_t>(k)] = acc * h / 3.0;
    }
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    std::vector<double> probs(bins), counts(bins, 0.0);
    for (int k = 0; k < bins; ++k) probs[static_cast<std::size_t>(k)] = mass[static_cast<std::size_t>(k)] / total;
    for (double y : r.choices) counts[std::min<std::size_t>(bins - 1, static_cast<std::size_t>(y * bins))] += 1.0;
    const double p = chi2_goodness_of_fit(counts, probs);
    o.check(p > 0.01, fmt("choice frequencies: chi-square p-value %.4f > 0.01 (20 bins, 1e5 trials)", p));

    const double location = std::log(total);
    const double ks = ks_distance(r.max_values, [&](double z) { return gumbel_cdf(z, location); });
    o.check(ks < 0.01, fmt("max utility vs Gumbel(log integral exp U): KS distance %.5f < 0.01", ks));
    return o;
}

// ---------------------------------------------------------------- AC9

double single_share(const ChooSiowEquilibrium& eq, const Vector& men, const Vector& women) {
    return (eq.single_x.sum() + eq.single_y.sum()) / (men.sum() + women.sum());
}

Outcome ac9() {
    Outcome o;
    const double sigma = 2.0;
    Matrix types(5, 1);
    types << -2, -1, 0, 1, 2;
    Vector men(5), women(5);
    men << 1.0, 2.0, 3.0, 2.0, 1.0;
    women << 1.5, 2.0, 2.0, 2.0, 1.5;
    const double b_true = 0.4;
    const Matrix base = sigma * b_true * types * types.transpose();

    // Exact log odds on tabulated populations.
    {
        DiscreteMarketSpec spec;
        spec.surplus = base;
        spec.men = men;
        spec.women = women;
        spec.types_x = types;
        spec.types_y = types;
        spec.sigma = sigma;
        spec.households = 20000;
        spec.seed = 109;
        const TypeTable t = tabulate(simulate_discrete_choo_siow(spec));
        const Matrix s = matching_surplus(t, sigma);
        double worst = 0.0;
        for (Index i = 0; i < s.rows(); ++i)
            for (Index j = 0; j < s.cols(); ++j) {
                if (t.matched(i, j) == 0.0) continue;
                const double expect =
                    std::log(t.matched(i, j) * t.matched(i, j) / (t.single_x(i) * t.single_y(j)));
                worst = std::max(worst, std::abs(s(i, j) - expect) / std::max(1.0, std::abs(expect)));
            }
        o.check(worst < 4.0 * std::numeric_limits<double>::epsilon(),
                fmt("surplus vs log(mu^2 / (mu_x0 mu_0y)): relative error %.1e", worst));
    }

    // Matched-only estimates across singles shares.
    for (double target : {0.1, 0.5, 0.9}) {
        double lo = -40.0, hi = 40.0;
        for (int it = 0; it < 200; ++it) {
            const double c = 0.5 * (lo + hi);
            const ChooSiowEquilibrium eq =
                solve_choo_siow(base + Matrix::Constant(5, 5, c), men, women, sigma);
            (single_share(eq, men, women) > target ? lo : hi) = c;
        }
        const double c = 0.5 * (lo + hi);
        DiscreteMarketSpec spec;
        spec.surplus = base + Matrix::Constant(5, 5, c);
        spec.men = men;
        spec.women = women;
        spec.types_x = types;
        spec.types_y = types;
        spec.sigma = sigma;
        spec.households = 60000;
        spec.seed = derive_seed(110, static_cast<std::uint64_t>(target * 100));
        const PopulationWithSingles pop = simulate_discrete_choo_siow(spec);
        const double realized =
            static_cast<double>(pop.singles_x.rows() + pop.singles_y.rows()) /
            static_cast<double>(pop.singles_x.rows() + pop.singles_y.rows() + 2 * pop.matched.size());
        const FitResult fit = fit_affinity(pop.matched);
        const AsymptoticCovariance cov =
            asymptotic_covariance(pop.matched, fit.report.b_hat, fit.coupling, {}, &fit.fisher);
        const double est = fit.report.b_hat(0, 0);
        const double se = cov.b_standard_errors()(0, 0);
        std::ostringstream what;
        what << "singles share " << fmt("%.2f", realized) << ": " << pop.matched.size() << " couples, B-hat "
             << fmt("%.4f (se %.4f)", est, se) << fmt(", truth %.2f", b_true);
        o.check(std::abs(est - b_true) < 2.0 * se, what.str());
    }
    return o;
}

// ---------------------------------------------------------------- AC10

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::string& cmd) { return std::system((cmd + " > /dev/null 2>&1").c_str()); }

Outcome ac10() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / ("affinity_ac10_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);

    Matrix b = Matrix::Zero(2, 3);
    b << 0.9, 0.0, 0.2, 0.0, 0.5, 0.0;
    const MatchedSample s = simulate_gaussian({b, 600, 111});
    const std::string csv = (root / "sample.csv").string();
    write_csv(csv, s);
    RunConfig cfg;
    cfg.input = csv;
    cfg.x_cols = s.names_x;
    cfg.y_cols = s.names_y;
    cfg.bootstrap = 8;
    cfg.seed = 112;
    const std::string first = dump_canonical(to_json(run_pipeline(cfg)));
    const std::string second = dump_canonical(to_json(run_pipeline(cfg)));
    ::setenv("AFFINITY_THREADS", "1", 1);
    const std::string serial = dump_canonical(to_json(run_pipeline(cfg)));
    ::unsetenv("AFFINITY_THREADS");
    o.check(first == second, "library pipeline: repeated runs byte-identical");
    o.check(first == serial, "library pipeline: identical with a single worker thread");

    if (!cli_path.empty()) {
        bool same = true;
        std::vector<std::string> names{"sample.csv", "fit.json", "report.json", "report.txt"};
        std::vector<std::string> runs;
        for (int k = 0; k < 2; ++k) {
            // Same relative paths in both runs: the input path is part of the
            // recorded configuration.
            const fs::path dir = root / ("cli" + std::to_string(k));
            fs::create_directories(dir);
            const std::string cd = "cd " + dir.string() + " && ";
            const std::string sim = cd + cli_path + " simulate --model gaussian --n 500 --b '1,0;0,0.4' --seed 5 --out .";
            const std::string rep = cd + cli_path +
                                    " report --input sample.csv --x-cols x1,x2 --y-cols y1,y2 --bootstrap 5 --seed 6"
                                    " --out report";
            const bool ok = run(sim) == 0 && run(rep) == 0;
            o.check(ok, "CLI run " + std::to_string(k) + " succeeded");
            std::string all;
            for (const auto& name : names) {
                const fs::path p = name == "sample.csv" ? dir / name : dir / "report" / name;
                all += slurp(p) + '\0';
            }
            runs.push_back(all);
        }
        same = runs[0] == runs[1] && runs[0].size() > names.size();
        o.check(same, "CLI simulate + report: sample.csv, fit.json, report.json, report.txt byte-identical");
    }
    fs::remove_all(root);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::function<Outcome()>> criteria{
        {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5},
        {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}, {"AC10", ac10},
    };
    const std::vector<std::string> order{"AC1", "AC2", "AC3", "AC4", "AC5", "AC6", "AC7", "AC8", "AC9", "AC10"};
    std::vector<std::string> wanted;
    for (int k = 1; k < argc; ++k) {
        const std::string arg = argv[k];
        if (arg.rfind("--cli=", 0) == 0)
            cli_path = fs::absolute(arg.substr(6)).string();
        else
            wanted.push_back(arg);
    }
    if (wanted.empty()) wanted = order;

    int failures = 0;
    for (const auto& name : wanted) {
        const auto it = criteria.find(name);
        if (it == criteria.end()) {
            std::fprintf(stderr, "unknown criterion %s\n", name.c_str());
            return 2;
        }
        Outcome out;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            out = it->second();
        } catch (const std::exception& e) {
            out.check(false, std::string("exception: ") + e.what());
        }
        for (const auto& line : out.lines) std::printf("%s\n", line.c_str());
        std::printf("%s %s (%.1f s)\n", name.c_str(), out.pass ? "PASS" : "FAIL", seconds_since(t0));
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
