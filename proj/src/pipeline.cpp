#include "affinity/pipeline.hpp"

#include <cmath>
#include <limits>

#include "affinity/inference.hpp"
#include "affinity/saliency.hpp"

namespace affinity {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Json to_json(const DoublyIndexedMatrix& m) {
    return {{"shape", {m.row_outer, m.row_inner, m.col_outer, m.col_inner}},
            {"data", matrix_to_json(m.data)}};
}

DoublyIndexedMatrix doubly_from_json(const Json& j) {
    const auto shape = j.at("shape").get<std::vector<Index>>();
    if (shape.size() != 4) throw InvalidArgument("doubly-indexed matrix needs a 4-entry shape");
    return {matrix_from_json(j.at("data")), shape[0], shape[1], shape[2], shape[3]};
}

Json to_json(const std::vector<ColumnScaling>& v) {
    Json out = Json::array();
    for (const auto& c : v) out.push_back({{"mean", c.mean}, {"std", c.std}});
    return out;
}

std::vector<ColumnScaling> scaling_from_json(const Json& j) {
    std::vector<ColumnScaling> out;
    for (const auto& c : j) out.push_back({c.at("mean").get<double>(), c.at("std").get<double>()});
    return out;
}

Json optional_matrix(const Matrix& m) { return m.size() ? matrix_to_json(m) : Json(nullptr); }
Matrix optional_matrix(const Json& j) { return j.is_null() ? Matrix() : matrix_from_json(j); }

FitSummary summarize(const FitReport& r) {
    FitSummary s;
    s.iterations = r.iterations;
    s.moment_gap = r.moment_gap;
    s.degenerate = r.degenerate;
    s.compressed = r.compressed;
    s.support_x = r.support_x;
    s.support_y = r.support_y;
    s.warnings = r.warnings;
    s.min_fisher_eigenvalue = kNaN;
    return s;
}

}  // namespace

FitConfig make_fit_config(const RunConfig& cfg) {
    FitConfig f;
    f.moment_tol = cfg.moment_tol;
    f.ipfp.tol = cfg.tol;
    f.ipfp.max_iter = cfg.max_iter;
    f.max_support = cfg.max_support;
    return f;
}

FitArtifact run_fit_stage(const RunConfig& cfg, const IngestResult& data) {
    FitArtifact out;
    out.config = cfg;
    out.ingest = data.report;
    auto [sample, scaling] = standardize(data.sample);
    out.scaling = std::move(scaling);
    out.names_x = sample.names_x;
    out.names_y = sample.names_y;
    out.n = sample.size();

    const FitConfig fcfg = make_fit_config(cfg);
    FitResult fit = fit_affinity(sample, fcfg);
    out.b = fit.report.b_hat;
    out.sigma_xy = fit.sigma_xy;
    out.fit = summarize(fit.report);
    if (fit.report.degenerate)
        out.notes.push_back("observed cross-covariance is zero; affinity estimated as 0");

    out.s_x = column_variances(sample.x);
    out.s_y = column_variances(sample.y);
    try {
        const AsymptoticCovariance cov =
            asymptotic_covariance(sample, out.b, fit.coupling, {}, &fit.fisher);
        out.has_covariance = true;
        out.fisher = cov.fisher;
        out.f_inv = cov.f_inv;
        out.k_xx = cov.k_xx;
        out.k_xy = cov.k_xy;
        out.k_yy = cov.k_yy;
        out.v_theta = cov.v_theta;
        out.theta = cov.theta;
        out.s_x = cov.s_x;
        out.s_y = cov.s_y;
        out.fit.min_fisher_eigenvalue = cov.min_fisher_eigenvalue;
    } catch (const Error& e) {
        out.failures.push_back(std::string("asymptotic covariance: ") + e.what());
        out.theta = out.s_x.cwiseSqrt().asDiagonal() * out.b * out.s_y.cwiseSqrt().asDiagonal();
    }

    if (cfg.bootstrap > 0) {
        const BootstrapResult boot = bootstrap_fit(sample, cfg.bootstrap, cfg.seed, fcfg);
        out.bootstrap_reps = boot.reps;
        out.bootstrap_failed = static_cast<Index>(boot.failures.size());
        if (!boot.b_draws.empty()) {
            out.b_std = boot.b_std;
            out.a_std = boot.a_std;
            out.share_std = boot.share_std;
        }
        for (const auto& f : boot.failures)
            out.failures.push_back("bootstrap replicate " + std::to_string(f.replicate) + ": " +
                                   f.message);
    }
    return out;
}

FitArtifact run_fit_stage(const RunConfig& cfg) {
    cfg.validate();
    return run_fit_stage(cfg, ingest_csv(cfg.input, {cfg.x_cols, cfg.y_cols}));
}

Json to_json(const FitArtifact& f) {
    Json j = {{"schema", kFitSchema},
              {"version", kVersion},
              {"config_hash", f.config.hash()},
              {"config", f.config.to_json()},
              {"ingest",
               {{"source", f.ingest.source},
                {"rows_read", f.ingest.rows_read},
                {"rows_dropped", f.ingest.rows_dropped},
                {"ignored_columns", f.ingest.ignored_columns}}},
              {"scaling", {{"x", to_json(f.scaling.x)}, {"y", to_json(f.scaling.y)}}},
              {"names_x", f.names_x},
              {"names_y", f.names_y},
              {"n", f.n},
              {"b", matrix_to_json(f.b)},
              {"sigma_xy", matrix_to_json(f.sigma_xy)},
              {"fit",
               {{"iterations", f.fit.iterations},
                {"moment_gap", f.fit.moment_gap},
                {"degenerate", f.fit.degenerate},
                {"compressed", f.fit.compressed},
                {"support_x", f.fit.support_x},
                {"support_y", f.fit.support_y},
                {"min_fisher_eigenvalue", std::isfinite(f.fit.min_fisher_eigenvalue)
                                              ? Json(f.fit.min_fisher_eigenvalue)
                                              : Json(nullptr)},
                {"warnings", f.fit.warnings}}},
              {"theta", matrix_to_json(f.theta)},
              {"s_x", vector_to_json(f.s_x)},
              {"s_y", vector_to_json(f.s_y)},
              {"bootstrap",
               {{"reps", f.bootstrap_reps},
                {"failed", f.bootstrap_failed},
                {"b_std", optional_matrix(f.b_std)},
                {"a_std", optional_matrix(f.a_std)},
                {"share_std", f.share_std.size() ? vector_to_json(f.share_std) : Json(nullptr)}}},
              {"notes", f.notes},
              {"failures", f.failures}};
    if (f.has_covariance) {
        j["covariance"] = {{"fisher", to_json(f.fisher)}, {"f_inv", to_json(f.f_inv)},
                           {"k_xx", to_json(f.k_xx)},     {"k_xy", to_json(f.k_xy)},
                           {"k_yy", to_json(f.k_yy)},     {"v_theta", to_json(f.v_theta)}};
    } else {
        j["covariance"] = nullptr;
    }
    return j;
}

FitArtifact fit_artifact_from_json(const Json& j) {
    if (!j.contains("version")) throw InvalidArgument("fit artifact has no version field");
    if (j.value("schema", std::string()) != kFitSchema)
        throw InvalidArgument("not a fit artifact (schema " + j.value("schema", std::string("?")) + ")");
    FitArtifact f;
    f.config = RunConfig::from_json(j.at("config"));
    const Json& in = j.at("ingest");
    f.ingest.source = in.at("source").get<std::string>();
    f.ingest.rows_read = in.at("rows_read").get<Index>();
    f.ingest.rows_dropped = in.at("rows_dropped").get<Index>();
    f.ingest.ignored_columns = in.at("ignored_columns").get<std::vector<std::string>>();
    f.scaling.x = scaling_from_json(j.at("scaling").at("x"));
    f.scaling.y = scaling_from_json(j.at("scaling").at("y"));
    f.names_x = j.at("names_x").get<std::vector<std::string>>();
    f.names_y = j.at("names_y").get<std::vector<std::string>>();
    f.n = j.at("n").get<Index>();
    f.b = matrix_from_json(j.at("b"));
    f.sigma_xy = matrix_from_json(j.at("sigma_xy"));
    const Json& fit = j.at("fit");
    f.fit.iterations = fit.at("iterations").get<int>();
    f.fit.moment_gap = fit.at("moment_gap").get<double>();
    f.fit.degenerate = fit.at("degenerate").get<bool>();
    f.fit.compressed = fit.at("compressed").get<bool>();
    f.fit.support_x = fit.at("support_x").get<Index>();
    f.fit.support_y = fit.at("support_y").get<Index>();
    f.fit.min_fisher_eigenvalue =
        fit.at("min_fisher_eigenvalue").is_null() ? kNaN : fit.at("min_fisher_eigenvalue").get<double>();
    f.fit.warnings = fit.at("warnings").get<std::vector<std::string>>();
    f.theta = matrix_from_json(j.at("theta"));
    f.s_x = vector_from_json(j.at("s_x"));
    f.s_y = vector_from_json(j.at("s_y"));
    const Json& boot = j.at("bootstrap");
    f.bootstrap_reps = boot.at("reps").get<Index>();
    f.bootstrap_failed = boot.at("failed").get<Index>();
    f.b_std = optional_matrix(boot.at("b_std"));
    f.a_std = optional_matrix(boot.at("a_std"));
    if (!boot.at("share_std").is_null()) f.share_std = vector_from_json(boot.at("share_std"));
    f.notes = j.at("notes").get<std::vector<std::string>>();
    f.failures = j.at("failures").get<std::vector<std::string>>();
    const Json& cov = j.at("covariance");
    if (!cov.is_null()) {
        f.has_covariance = true;
        f.fisher = doubly_from_json(cov.at("fisher"));
        f.f_inv = doubly_from_json(cov.at("f_inv"));
        f.k_xx = doubly_from_json(cov.at("k_xx"));
        f.k_xy = doubly_from_json(cov.at("k_xy"));
        f.k_yy = doubly_from_json(cov.at("k_yy"));
        f.v_theta = doubly_from_json(cov.at("v_theta"));
    }
    if (f.b.rows() != static_cast<Index>(f.names_x.size()) ||
        f.b.cols() != static_cast<Index>(f.names_y.size()))
        throw DimensionMismatch("fit artifact: B does not match the attribute names");
    return f;
}

AffinityTable affinity_table(const FitArtifact& f) {
    AffinityTable t;
    t.rows = f.names_x;
    t.cols = f.names_y;
    t.significance_z = f.config.significance_z;
    const Index dx = f.b.rows(), dy = f.b.cols();
    t.std_error = Matrix::Constant(dx, dy, kNaN);
    const double norm = f.b.norm();
    const double n = static_cast<double>(f.n);

    if (f.config.sigma_normalize || norm == 0.0) {
        t.normalized = false;
        t.sigma = 1.0;
        t.estimate = f.b;
        if (f.has_covariance) {
            const Vector var = f.f_inv.data.diagonal() / n;
            t.std_error = unvectorize(var.cwiseMax(0.0).cwiseSqrt(), dx, dy);
        }
        return t;
    }
    t.normalized = true;
    t.sigma = 1.0 / norm;
    t.estimate = f.b / norm;
    if (f.has_covariance) {
        // vec(A) = vec(B) / ||B||: Jacobian (I - a a') / ||B||.
        const Vector a = vectorize(t.estimate);
        const Matrix jac = (Matrix::Identity(a.size(), a.size()) - a * a.transpose()) / norm;
        const Vector var = (jac * f.f_inv.data * jac.transpose()).diagonal() / n;
        t.std_error = unvectorize(var.cwiseMax(0.0).cwiseSqrt(), dx, dy);
    }
    return t;
}

void saliency_tables(const FitArtifact& f, LoadingsTable& loadings, ShareTable& shares) {
    const double norm = f.b.norm();
    const bool use_b = f.config.sigma_normalize || norm == 0.0;
    const SaliencyResult s = saliency(use_b ? f.b : Matrix(f.b / norm), f.s_x, f.s_y);
    loadings.names_x = f.names_x;
    loadings.names_y = f.names_y;
    loadings.loadings_x = s.loadings_x.topRows(s.lambda.size());
    loadings.loadings_y = s.loadings_y.topRows(s.lambda.size());
    loadings.lambda = s.lambda;
    loadings.shares = s.shares;
    loadings.cumulative = Vector(s.shares.size());
    double acc = 0.0;
    for (Index k = 0; k < s.shares.size(); ++k) loadings.cumulative(k) = acc += s.shares(k);
    loadings.degenerate_subspace = s.degenerate_subspace();

    shares.shares = s.shares;
    shares.share_std = f.share_std;
    shares.reps = f.bootstrap_reps;
    shares.failed = f.bootstrap_failed;
}

Index rank_sweep(const FitArtifact& f, std::vector<RankRow>& rows, std::vector<std::string>& notes,
                 std::vector<std::string>& failures) {
    const Index d = std::min(f.b.rows(), f.b.cols());
    if (d < 2) {
        notes.push_back("rank test skipped: min(d_x, d_y) = 1");
        return d;
    }
    if (!f.has_covariance) {
        notes.push_back("rank tests skipped: no asymptotic covariance");
        return 0;
    }
    Index dim = d;
    bool decided = false;
    for (Index p = 1; p < d; ++p) {
        RankRow row;
        row.p = p;
        row.df = (f.b.rows() - p) * (f.b.cols() - p);
        try {
            const RankTestResult r = rank_test(f.theta, f.v_theta, f.n, p);
            row.statistic = r.statistic;
            row.p_value = r.p_value;
            row.degenerate = r.degenerate;
            if (!decided && r.p_value >= f.config.alpha) {
                dim = p;
                decided = true;
            }
        } catch (const Error& e) {
            row.statistic = kNaN;
            row.p_value = kNaN;
            row.error = e.what();
            failures.push_back("rank test p = " + std::to_string(p) + ": " + e.what());
            if (!decided) {
                dim = 0;
                decided = true;
            }
        }
        rows.push_back(std::move(row));
    }
    if (dim == 0) notes.push_back("sorting dimension undetermined: a required rank test aborted");
    return dim;
}

Report build_report(const FitArtifact& f) {
    Report r;
    r.config = f.config;
    r.ingest = f.ingest;
    r.n = f.n;
    r.fit = f.fit;
    r.notes = f.notes;
    r.failures = f.failures;
    r.notes.push_back("attributes standardized to zero mean and unit variance");
    r.affinity = affinity_table(f);
    saliency_tables(f, r.loadings, r.shares);
    r.sorting_dimension = rank_sweep(f, r.rank_tests, r.notes, r.failures);
    return r;
}

Report run_pipeline(const RunConfig& cfg) { return build_report(run_fit_stage(cfg)); }

}  // namespace affinity
