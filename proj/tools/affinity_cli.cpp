// Command-line front end: estimate, saliency, ranktest, report, simulate, ipfp.
//
// Exit status: 0 success, 1 error, 2 finished with recorded failures
// (rank tests or bootstrap replicates that aborted).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "affinity/estimator.hpp"
#include "affinity/io.hpp"
#include "affinity/pipeline.hpp"
#include "affinity/schrodinger.hpp"
#include "affinity/simulate.hpp"
#include "affinity/welfare.hpp"

namespace fs = std::filesystem;
using namespace affinity;

namespace {

constexpr int kExitError = 1;
constexpr int kExitPartial = 2;

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const ZeroVarianceColumn*>(&e)) return "ZeroVarianceColumn";
    if (dynamic_cast<const CenteringNotConverged*>(&e)) return "CenteringNotConverged";
    if (dynamic_cast<const NotConverged*>(&e)) return "NotConverged";
    if (dynamic_cast<const NumericalOverflow*>(&e)) return "NumericalOverflow";
    if (dynamic_cast<const SingularFisher*>(&e)) return "SingularFisher";
    if (dynamic_cast<const SingularCornerBlock*>(&e)) return "SingularCornerBlock";
    if (dynamic_cast<const MissingColumn*>(&e)) return "MissingColumn";
    if (dynamic_cast<const NonNumericCell*>(&e)) return "NonNumericCell";
    if (dynamic_cast<const EmptyAfterFiltering*>(&e)) return "EmptyAfterFiltering";
    if (dynamic_cast<const IoError*>(&e)) return "IoError";
    if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
    if (dynamic_cast<const DimensionMismatch*>(&e)) return "DimensionMismatch";
    if (dynamic_cast<const InvalidArgument*>(&e)) return "InvalidArgument";
    if (dynamic_cast<const Error*>(&e)) return "Error";
    return "InternalError";
}

// Best effort: a failure record next to the outputs, unless the directory
// belongs to another config.
void write_failure(const std::string& out, const std::string& stage, const std::exception& e) {
    if (out.empty() || dynamic_cast<const ConfigError*>(&e)) return;
    try {
        const Json j = {{"version", kVersion},
                        {"stage", stage},
                        {"error", error_kind(e)},
                        {"message", e.what()}};
        write_file_atomic((fs::path(out) / "failure.json").string(), dump_canonical(j));
    } catch (const std::exception&) {
    }
}

bool wants(const std::vector<std::string>& formats, const char* f) {
    return std::find(formats.begin(), formats.end(), f) != formats.end();
}

Json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

std::string join(const fs::path& dir, const char* name) { return (dir / name).string(); }

// "1,0;0,1" -> 2 x 2
Matrix parse_matrix(const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::stringstream rs(text);
    std::string row;
    while (std::getline(rs, row, ';')) {
        std::vector<double> r;
        std::stringstream cs(row);
        std::string cell;
        while (std::getline(cs, cell, ',')) {
            try {
                std::size_t used = 0;
                r.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::exception();
            } catch (const std::exception&) {
                throw ConfigError("bad matrix entry '" + cell + "'");
            }
        }
        if (!rows.empty() && r.size() != rows.front().size()) throw ConfigError("ragged matrix");
        rows.push_back(std::move(r));
    }
    if (rows.empty() || rows.front().empty()) throw ConfigError("empty matrix");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
    return m;
}

struct Shared {
    RunConfig cfg;
    std::string matrix_text;
    double sigma = 1.0;
    std::string model = "gaussian";
    Index n = 1000;
};

void add_data_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--input", cfg.input, "CSV file, one couple per row")->required();
    cmd->add_option("--x-cols", cfg.x_cols, "Columns describing the man")->required()->delimiter(',');
    cmd->add_option("--y-cols", cfg.y_cols, "Columns describing the woman")->required()->delimiter(',');
}

void add_solver_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--tol", cfg.tol, "IPFP marginal tolerance")->capture_default_str();
    cmd->add_option("--max-iter", cfg.max_iter, "IPFP iteration cap")->capture_default_str();
}

void add_estimator_options(CLI::App* cmd, RunConfig& cfg) {
    add_solver_options(cmd, cfg);
    cmd->add_option("--moment-tol", cfg.moment_tol, "Moment-matching tolerance")->capture_default_str();
    cmd->add_option("--max-support", cfg.max_support, "Support size before compression")
        ->capture_default_str();
    cmd->add_option("--bootstrap", cfg.bootstrap, "Bootstrap replicates (0 disables)")
        ->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
    cmd->add_flag("--sigma-normalize", cfg.sigma_normalize,
                  "Report B (unit heterogeneity) instead of A with ||A|| = 1");
}

void add_report_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--alpha", cfg.alpha, "Rank-test level")->capture_default_str();
    cmd->add_option("--significance-z", cfg.significance_z, "Critical value for starred cells")
        ->capture_default_str();
}

void add_output_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--out", cfg.out, "Output directory")->required();
    cmd->add_option("--format", cfg.formats, "Output formats")
        ->delimiter(',')
        ->check(CLI::IsMember({"json", "text"}))
        ->capture_default_str();
    cmd->add_flag("--force", cfg.force, "Overwrite outputs of a different configuration");
}

void print_written(const std::vector<std::string>& paths) {
    for (const auto& p : paths) std::cout << "wrote " << p << '\n';
}

int finish(const std::vector<std::string>& failures) {
    for (const auto& f : failures) std::cerr << "failure: " << f << '\n';
    return failures.empty() ? 0 : kExitPartial;
}

// ---------------------------------------------------------------- subcommands

int cmd_estimate(const RunConfig& cfg) {
    cfg.validate();
    const fs::path dir(cfg.out);
    const FitArtifact fit = run_fit_stage(cfg);
    claim_output_dir(cfg.out, cfg, cfg.force);
    std::vector<std::string> written{join(dir, "fit.json")};
    write_file_atomic(written.back(), dump_canonical(to_json(fit)));
    if (wants(cfg.formats, "text")) {
        written.push_back(join(dir, "estimate.txt"));
        write_file_atomic(written.back(), render_affinity(affinity_table(fit)));
    }
    print_written(written);
    return finish(fit.failures);
}

// Settings from the fit artifact; level, critical value and outputs from the command line.
FitArtifact load_fit(const RunConfig& cli) {
    FitArtifact fit = fit_artifact_from_json(read_json(cli.input));
    fit.config.alpha = cli.alpha;
    fit.config.significance_z = cli.significance_z;
    fit.config.formats = cli.formats;
    fit.config.validate();
    return fit;
}

int cmd_saliency(const RunConfig& cli) {
    const FitArtifact fit = load_fit(cli);
    LoadingsTable loadings;
    ShareTable shares;
    saliency_tables(fit, loadings, shares);
    const Json config = {{"stage", "saliency"}, {"fit", fit.config.to_json()}};
    claim_output_dir(cli.out, config, cli.force);
    const fs::path dir(cli.out);
    std::vector<std::string> written;
    if (wants(cli.formats, "json")) {
        written.push_back(join(dir, "saliency.json"));
        const Json j = {{"version", kVersion},
                        {"config_hash", fit.config.hash()},
                        {"loadings", table_to_json(loadings)},
                        {"shares", table_to_json(shares)}};
        write_file_atomic(written.back(), dump_canonical(j));
    }
    if (wants(cli.formats, "text")) {
        written.push_back(join(dir, "saliency.txt"));
        write_file_atomic(written.back(), render_saliency(loadings, shares));
    }
    print_written(written);
    return 0;
}

int cmd_ranktest(const RunConfig& cli) {
    const FitArtifact fit = load_fit(cli);
    std::vector<RankRow> rows;
    std::vector<std::string> notes, failures;
    const Index dim = rank_sweep(fit, rows, notes, failures);
    const Json config = {{"stage", "ranktest"}, {"fit", fit.config.to_json()}};
    claim_output_dir(cli.out, config, cli.force);
    const fs::path dir(cli.out);
    std::vector<std::string> written;
    if (wants(cli.formats, "json")) {
        written.push_back(join(dir, "ranktest.json"));
        const Json j = {{"version", kVersion},
                        {"config_hash", fit.config.hash()},
                        {"alpha", fit.config.alpha},
                        {"rank_tests", table_to_json(rows)},
                        {"sorting_dimension", dim},
                        {"notes", notes},
                        {"failures", failures}};
        write_file_atomic(written.back(), dump_canonical(j));
    }
    if (wants(cli.formats, "text")) {
        written.push_back(join(dir, "ranktest.txt"));
        std::string text = render_rank_tests(rows, fit.config.alpha, dim);
        for (const auto& n : notes) text += "note: " + n + "\n";
        write_file_atomic(written.back(), text);
    }
    print_written(written);
    return finish(failures);
}

int cmd_report(const RunConfig& cli) {
    const bool from_fit = fs::path(cli.input).extension() == ".json";
    FitArtifact fit;
    if (from_fit) {
        fit = load_fit(cli);
    } else {
        cli.validate();
        fit = run_fit_stage(cli);
    }
    const Report report = build_report(fit);
    std::vector<std::string> written = emit(report, cli.out, cli.formats, cli.force);
    if (!from_fit) {
        written.insert(written.begin(), join(cli.out, "fit.json"));
        write_file_atomic(written.front(), dump_canonical(to_json(fit)));
    }
    print_written(written);
    return finish(report.failures);
}

int cmd_simulate(const Shared& s, const RunConfig& cli) {
    MatchedSample sample;
    Json config = {{"stage", "simulate"}, {"model", s.model}, {"n", s.n}, {"seed", cli.seed}};
    if (s.model == "gaussian1d") {
        sample = simulate_gaussian_1d(s.sigma, s.n, cli.seed);
        config["sigma"] = s.sigma;
    } else if (s.model == "gaussian") {
        const Matrix b = s.matrix_text.empty() ? Matrix::Identity(1, 1) : parse_matrix(s.matrix_text);
        sample = simulate_gaussian({b, s.n, cli.seed});
        config["b"] = matrix_to_json(b);
    } else {
        throw ConfigError("unknown model: " + s.model);
    }
    claim_output_dir(cli.out, config, cli.force);
    const std::string path = join(cli.out, "sample.csv");
    write_csv(path, sample);
    print_written({path});
    return 0;
}

int cmd_ipfp(const Shared& s, const RunConfig& cli) {
    if (s.matrix_text.empty()) throw ConfigError("--a is required");
    if (!(s.sigma > 0.0)) throw ConfigError("sigma must be positive");
    const Matrix a = parse_matrix(s.matrix_text);
    const IngestResult data = ingest_csv(cli.input, {cli.x_cols, cli.y_cols});
    if (a.rows() != data.sample.dim_x() || a.cols() != data.sample.dim_y())
        throw ConfigError("--a must be " + std::to_string(data.sample.dim_x()) + " x " +
                          std::to_string(data.sample.dim_y()));
    const SupportSummary px = summarize_support(data.sample.x, cli.max_support);
    const SupportSummary py = summarize_support(data.sample.y, cli.max_support);
    IpfpConfig icfg;
    icfg.tol = cli.tol;
    icfg.max_iter = cli.max_iter;
    const Matrix phi = quadratic_utility(a, px.marginal.support, py.marginal.support);
    const IpfpResult r = solve_ipfp(phi, s.sigma, px.marginal, py.marginal, icfg);

    const Json config = {{"stage", "ipfp"},       {"input", cli.input},     {"x_cols", cli.x_cols},
                         {"y_cols", cli.y_cols},  {"a", matrix_to_json(a)}, {"sigma", s.sigma},
                         {"tol", cli.tol},        {"max_iter", cli.max_iter},
                         {"max_support", cli.max_support}};
    claim_output_dir(cli.out, config, cli.force);
    const fs::path dir(cli.out);
    std::vector<std::string> written;
    const double gain = social_gain(r.coupling, phi, s.sigma);
    if (wants(cli.formats, "json")) {
        written.push_back(join(dir, "ipfp.json"));
        const Json j = {{"version", kVersion},
                        {"config_hash", fnv1a_hex(config.dump())},
                        {"iterations", r.report.iterations},
                        {"marginal_error", r.report.marginal_error},
                        {"kernel_rebuilds", r.report.kernel_rebuilds},
                        {"support_x", matrix_to_json(px.marginal.support)},
                        {"support_y", matrix_to_json(py.marginal.support)},
                        {"weights_x", vector_to_json(px.marginal.weights)},
                        {"weights_y", vector_to_json(py.marginal.weights)},
                        {"potential_a", vector_to_json(r.potentials.a)},
                        {"potential_b", vector_to_json(r.potentials.b)},
                        {"cross_moment", matrix_to_json(r.coupling.cross_moment())},
                        {"social_gain", gain}};
        write_file_atomic(written.back(), dump_canonical(j));
    }
    if (wants(cli.formats, "text")) {
        written.push_back(join(dir, "ipfp.txt"));
        std::ostringstream os;
        os << "IPFP on " << px.marginal.size() << " x " << py.marginal.size() << " support, sigma "
           << s.sigma << '\n'
           << "iterations: " << r.report.iterations << '\n'
           << "marginal error: " << r.report.marginal_error << '\n'
           << "social gain: " << gain << '\n';
        write_file_atomic(written.back(), os.str());
    }
    print_written(written);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Estimate affinity matrices from matched couples"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    Shared s;
    RunConfig& cfg = s.cfg;

    auto* estimate = app.add_subcommand("estimate", "Fit the affinity matrix; writes fit.json");
    add_data_options(estimate, cfg);
    add_estimator_options(estimate, cfg);
    add_report_options(estimate, cfg);
    add_output_options(estimate, cfg);

    auto* sal = app.add_subcommand("saliency", "Saliency tables from a fit.json artifact");
    sal->add_option("--input", cfg.input, "fit.json written by estimate")->required();
    add_report_options(sal, cfg);
    add_output_options(sal, cfg);

    auto* rank = app.add_subcommand("ranktest", "Rank tests from a fit.json artifact");
    rank->add_option("--input", cfg.input, "fit.json written by estimate")->required();
    add_report_options(rank, cfg);
    add_output_options(rank, cfg);

    auto* report = app.add_subcommand("report", "Full pipeline from a CSV (or a fit.json)");
    report->add_option("--input", cfg.input, "CSV file or fit.json")->required();
    report->add_option("--x-cols", cfg.x_cols, "Columns describing the man")->delimiter(',');
    report->add_option("--y-cols", cfg.y_cols, "Columns describing the woman")->delimiter(',');
    add_estimator_options(report, cfg);
    add_report_options(report, cfg);
    add_output_options(report, cfg);

    auto* sim = app.add_subcommand("simulate", "Synthetic couples with a known affinity");
    sim->add_option("--model", s.model, "gaussian or gaussian1d")
        ->check(CLI::IsMember({"gaussian", "gaussian1d"}))
        ->capture_default_str();
    sim->add_option("--n", s.n, "Number of couples")->capture_default_str();
    sim->add_option("--b", s.matrix_text, "Affinity at unit heterogeneity, rows split by ';'");
    sim->add_option("--sigma", s.sigma, "Heterogeneity (gaussian1d)")->capture_default_str();
    sim->add_option("--seed", cfg.seed, "Seed")->capture_default_str();
    sim->add_option("--out", cfg.out, "Output directory")->required();
    sim->add_flag("--force", cfg.force, "Overwrite outputs of a different configuration");

    auto* ipfp = app.add_subcommand("ipfp", "Equilibrium coupling for a given affinity");
    add_data_options(ipfp, cfg);
    ipfp->add_option("--a", s.matrix_text, "Affinity matrix, rows split by ';'")->required();
    ipfp->add_option("--sigma", s.sigma, "Heterogeneity")->capture_default_str();
    add_solver_options(ipfp, cfg);
    ipfp->add_option("--max-support", cfg.max_support, "Support size before compression")
        ->capture_default_str();
    add_output_options(ipfp, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitError;
    }

    const std::string stage = app.get_subcommands().front()->get_name();
    try {
        if (stage == "estimate") return cmd_estimate(cfg);
        if (stage == "saliency") return cmd_saliency(cfg);
        if (stage == "ranktest") return cmd_ranktest(cfg);
        if (stage == "report") return cmd_report(cfg);
        if (stage == "simulate") return cmd_simulate(s, cfg);
        if (stage == "ipfp") return cmd_ipfp(s, cfg);
    } catch (const std::exception& e) {
        std::cerr << "error (" << error_kind(e) << "): " << e.what() << '\n';
        write_failure(cfg.out, stage, e);
        return kExitError;
    }
    return kExitError;
}
