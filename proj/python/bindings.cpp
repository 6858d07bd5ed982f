#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "affinity/estimator.hpp"
#include "affinity/inference.hpp"
#include "affinity/io.hpp"
#include "affinity/pipeline.hpp"
#include "affinity/saliency.hpp"
#include "affinity/schrodinger.hpp"
#include "affinity/simulate.hpp"
#include "affinity/singles.hpp"

namespace py = pybind11;
using namespace affinity;

namespace {

DiscreteMarginal marginal(const Vector& weights, const Matrix& support) {
    return DiscreteMarginal{weights, support};
}

py::dict ipfp(const Matrix& phi, double sigma, const Vector& p_weights, const Matrix& p_support,
              const Vector& q_weights, const Matrix& q_support, double tol, int max_iter) {
    IpfpConfig cfg;
    cfg.tol = tol;
    cfg.max_iter = max_iter;
    IpfpResult r;
    {
        py::gil_scoped_release release;
        r = solve_ipfp(phi, sigma, marginal(p_weights, p_support), marginal(q_weights, q_support), cfg);
    }
    py::dict out;
    out["pi"] = r.coupling.pi;
    out["a"] = r.potentials.a;
    out["b"] = r.potentials.b;
    out["iterations"] = r.report.iterations;
    out["marginal_error"] = r.report.marginal_error;
    return out;
}

py::dict fit(const Matrix& x, const Matrix& y, double moment_tol, Index max_support, bool covariance) {
    FitConfig cfg;
    cfg.moment_tol = moment_tol;
    cfg.max_support = max_support;
    const MatchedSample sample = MatchedSample::make(x, y);
    py::dict out;
    FitResult r;
    AsymptoticCovariance cov;
    {
        py::gil_scoped_release release;
        r = fit_affinity(sample, cfg);
        if (covariance) cov = asymptotic_covariance(sample, r.report.b_hat, r.coupling, {}, &r.fisher);
    }
    out["b"] = r.report.b_hat;
    out["a"] = r.model.a;
    out["sigma"] = r.model.sigma;
    out["moment_gap"] = r.report.moment_gap;
    out["iterations"] = r.report.iterations;
    out["degenerate"] = r.report.degenerate;
    out["compressed"] = r.report.compressed;
    out["warnings"] = r.report.warnings;
    if (covariance) {
        out["std_error"] = cov.b_standard_errors();
        out["theta"] = cov.theta;
        out["v_theta"] = cov.v_theta.data;
    }
    return out;
}

py::dict saliency_py(const Matrix& a, const Vector& s_x, const Vector& s_y) {
    const SaliencyResult s = saliency(a, s_x, s_y);
    py::dict out;
    out["theta"] = s.theta;
    out["u"] = s.u;
    out["v"] = s.v;
    out["lambda"] = s.lambda;
    out["shares"] = s.shares;
    out["loadings_x"] = s.loadings_x;
    out["loadings_y"] = s.loadings_y;
    out["degenerate_subspace"] = s.degenerate_subspace();
    return out;
}

py::dict rank_test_py(const Matrix& theta, const Matrix& v_theta, Index n, Index p) {
    const DoublyIndexedMatrix v = DoublyIndexedMatrix::square(v_theta, theta.rows(), theta.cols());
    const RankTestResult r = rank_test(theta, v, n, p);
    py::dict out;
    out["statistic"] = r.statistic;
    out["df"] = r.df;
    out["p_value"] = r.p_value;
    out["degenerate"] = r.degenerate;
    return out;
}

py::tuple gaussian(const Matrix& b, Index n, std::uint64_t seed) {
    const MatchedSample s = simulate_gaussian({b, n, seed});
    return py::make_tuple(s.x, s.y);
}

py::tuple gaussian_1d(double sigma, Index n, std::uint64_t seed) {
    const MatchedSample s = simulate_gaussian_1d(sigma, n, seed);
    return py::make_tuple(s.x, s.y);
}

Matrix surplus(const Matrix& matched, const Vector& single_x, const Vector& single_y, double sigma) {
    return matching_surplus(TypeTable::from_counts(matched, single_x, single_y), sigma);
}

// Runs the full pipeline from a configuration in its JSON form and returns
// the report as JSON text.
std::string report_json(const std::string& config) {
    Json merged = RunConfig{}.to_json();
    const Json given = Json::parse(config);
    for (const auto& [key, value] : given.items()) {
        if (!merged.contains(key)) throw ConfigError("unknown configuration key: " + key);
        merged[key] = value;
    }
    const RunConfig cfg = RunConfig::from_json(merged);
    cfg.validate();
    Report r;
    {
        py::gil_scoped_release release;
        r = run_pipeline(cfg);
    }
    return dump_canonical(to_json(r));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Affinity matrix estimation for matching markets";
    m.attr("__version__") = kVersion;

    auto base = py::register_exception<Error>(m, "AffinityError", PyExc_RuntimeError);
    py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());
    py::register_exception<NotConverged>(m, "NotConverged", base.ptr());
    py::register_exception<ZeroVarianceColumn>(m, "ZeroVarianceColumn", base.ptr());
    py::register_exception<SingularFisher>(m, "SingularFisher", base.ptr());
    py::register_exception<SingularCornerBlock>(m, "SingularCornerBlock", base.ptr());
    py::register_exception<NonPositiveVariance>(m, "NonPositiveVariance", base.ptr());
    py::register_exception<BinError>(m, "BinError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    m.def("gaussian_slope", &gaussian_slope, py::arg("sigma"),
          "Equilibrium correlation of the one-dimensional Gaussian market.");
    m.def("simulate_gaussian", &gaussian, py::arg("b"), py::arg("n"), py::arg("seed") = 0,
          "Draws n couples from the Gaussian market with affinity B; returns (x, y).");
    m.def("simulate_gaussian_1d", &gaussian_1d, py::arg("sigma"), py::arg("n"), py::arg("seed") = 0);
    m.def("solve_ipfp", &ipfp, py::arg("phi"), py::arg("sigma"), py::arg("p_weights"), py::arg("p_support"),
          py::arg("q_weights"), py::arg("q_support"), py::arg("tol") = 1e-10, py::arg("max_iter") = 10000,
          "Equilibrium coupling and potentials for a utility matrix.");
    m.def("fit", &fit, py::arg("x"), py::arg("y"), py::arg("moment_tol") = 1e-6, py::arg("max_support") = 3000,
          py::arg("covariance") = true, "Estimates the affinity matrix from matched couples.");
    m.def("saliency", &saliency_py, py::arg("a"), py::arg("s_x"), py::arg("s_y"));
    m.def("rank_test", &rank_test_py, py::arg("theta"), py::arg("v_theta"), py::arg("n"), py::arg("p"));
    m.def("matching_surplus", &surplus, py::arg("matched"), py::arg("single_x"), py::arg("single_y"),
          py::arg("sigma") = 2.0);
    m.def("report_json", &report_json, py::arg("config"));
}
