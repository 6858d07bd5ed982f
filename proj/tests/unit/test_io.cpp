#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "affinity/io.hpp"
#include "affinity/pipeline.hpp"
#include "affinity/simulate.hpp"
#include "helpers.hpp"

using namespace affinity;
using namespace testing_helpers;
namespace fs = std::filesystem;

namespace {

IngestResult parse(const std::string& text, std::vector<std::string> xs, std::vector<std::string> ys) {
    std::istringstream in(text);
    return parse_csv(in, {std::move(xs), std::move(ys)});
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("affinity_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunConfig config_for(const std::string& input, std::vector<std::string> xs, std::vector<std::string> ys) {
    RunConfig c;
    c.input = input;
    c.x_cols = std::move(xs);
    c.y_cols = std::move(ys);
    return c;
}

}  // namespace

TEST_CASE("rows with a missing mapped value are dropped") {
    const IngestResult r = parse("a,b,c,extra\n1,2,3,q\n4,,6,r\n7,8,9,s\n", {"a", "b"}, {"c"});
    CHECK(r.sample.size() == 2);
    CHECK(r.report.rows_read == 3);
    CHECK(r.report.rows_dropped == 1);
    CHECK(r.report.ignored_columns == std::vector<std::string>{"extra"});
    CHECK(r.sample.x(1, 0) == 7.0);
    CHECK(r.sample.y(1, 0) == 9.0);
    CHECK(r.sample.names_x == std::vector<std::string>{"a", "b"});

    const IngestResult na = parse("a,b\n1,NA\nnan,2\n3,4\n", {"a"}, {"b"});
    CHECK(na.sample.size() == 1);
    // Unmapped columns may hold anything.
    CHECK(parse("a,b,c\n1,2,hello\n", {"a"}, {"b"}).sample.size() == 1);
}

TEST_CASE("quoted fields, BOM and CRLF") {
    const IngestResult r = parse("\xEF\xBB\xBF\"x\",y,\"note, with comma\"\r\n1.5,+2,\"a \"\"quoted\"\" cell\"\r\n\r\n", {"x"},
                                 {"y"});
    CHECK(r.sample.size() == 1);
    CHECK(r.sample.x(0, 0) == 1.5);
    CHECK(r.sample.y(0, 0) == 2.0);
}

TEST_CASE("ingestion errors") {
    CHECK_THROWS_AS(parse("a,b\n1,2\n", {"a"}, {"z"}), MissingColumn);
    try {
        parse("a,b\n1,2\n3,abc\n", {"a"}, {"b"});
        FAIL("expected NonNumericCell");
    } catch (const NonNumericCell& e) {
        CHECK(e.row() == 3);
        CHECK(e.column() == "b");
    }
    CHECK_THROWS_AS(parse("a,b\n1,inf\n", {"a"}, {"b"}), NonNumericCell);
    CHECK_THROWS_AS(parse("a,b\n1,2x\n", {"a"}, {"b"}), NonNumericCell);
    CHECK_THROWS_AS(parse("a,b\n1,\n,2\n", {"a"}, {"b"}), EmptyAfterFiltering);
    CHECK_THROWS_AS(parse("a,a\n1,2\n", {"a"}, {"a"}), IoError);
    CHECK_THROWS_AS(parse("a,b\n1,2,3\n", {"a"}, {"b"}), IoError);
    CHECK_THROWS_AS(ingest_csv("/nonexistent/file.csv", {{"a"}, {"b"}}), IoError);
}

TEST_CASE("shortest double formatting round-trips") {
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> ud(-1e6, 1e6);
    for (int k = 0; k < 1000; ++k) {
        const double v = ud(rng) * std::pow(10.0, static_cast<double>(k % 40 - 20));
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
}

TEST_CASE("CSV write and read back is bit-identical") {
    TempDir dir("csv");
    std::mt19937_64 rng(52);
    const MatchedSample s = MatchedSample::make(random_matrix(50, 2, rng), random_matrix(50, 3, rng), {"u", "v"},
                                                {"p", "q", "r"});
    const std::string path = (dir.path / "s.csv").string();
    write_csv(path, s);
    const IngestResult back = ingest_csv(path, {s.names_x, s.names_y});
    CHECK(back.sample.x == s.x);
    CHECK(back.sample.y == s.y);
    CHECK(back.report.source == path);
    CHECK_FALSE(fs::exists(path + ".tmp"));
}

TEST_CASE("population CSV separates couples and singles") {
    std::istringstream in("h,w\n1,2\n3,\n,4\n,\n5,6\n");
    const PopulationIngest p = parse_population_csv(in, {{"h"}, {"w"}});
    CHECK(p.population.matched.size() == 2);
    CHECK(p.population.singles_x.rows() == 1);
    CHECK(p.population.singles_x(0, 0) == 3.0);
    CHECK(p.population.singles_y.rows() == 1);
    CHECK(p.population.singles_y(0, 0) == 4.0);
    CHECK(p.report.rows_dropped == 1);
}

TEST_CASE("run configuration validation and hashing") {
    RunConfig c = config_for("in.csv", {"a"}, {"b"});
    CHECK_NOTHROW(c.validate());
    const std::string h = c.hash();
    CHECK(h.size() == 16);

    RunConfig other = c;
    other.out = "elsewhere";
    other.force = true;
    CHECK(other.hash() == h);
    other.seed = 1;
    CHECK(other.hash() != h);
    CHECK(RunConfig::from_json(c.to_json()).hash() == h);
    CHECK(fnv1a_hex("") == "cbf29ce484222325");

    RunConfig bad = c;
    bad.alpha = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.y_cols = {"a"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.formats = {"xml"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.bootstrap = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("significance stars") {
    AffinityTable t;
    t.rows = {"x1"};
    t.cols = {"y1", "y2", "y3"};
    t.estimate = Matrix(1, 3);
    t.estimate << 1.0, 0.1, 0.5;
    t.std_error = Matrix(1, 3);
    t.std_error << 0.1, 0.1, std::nan("");
    CHECK(t.significant(0, 0));
    CHECK_FALSE(t.significant(0, 1));
    CHECK_FALSE(t.significant(0, 2));
    const std::string text = render_affinity(t);
    // One star in the legend and one in the grid.
    CHECK(std::count(text.begin(), text.end(), '*') == 2);
    CHECK(text.find("1.0000*") != std::string::npos);
    const Json j = table_to_json(t);
    CHECK(j["significant"][0][0] == true);
    CHECK(j["std_error"][0][2].is_null());
}

TEST_CASE("pipeline report round-trips and writes deterministic files") {
    TempDir dir("pipe");
    Matrix b = Matrix::Zero(2, 2);
    b.diagonal() << 1.0, 0.4;
    const MatchedSample s = simulate_gaussian({b, 400, 53});
    const std::string csv = (dir.path / "in.csv").string();
    write_csv(csv, s);
    RunConfig cfg = config_for(csv, s.names_x, s.names_y);
    cfg.bootstrap = 3;
    cfg.seed = 9;

    const Report r = run_pipeline(cfg);
    CHECK(r.n == 400);
    CHECK(r.failures.empty());
    CHECK(r.rank_tests.size() == 1);
    CHECK(r.shares.share_std.size() == 2);
    CHECK(r.affinity.estimate.norm() == doctest::Approx(1.0));

    const Json j = to_json(r);
    CHECK(j["version"] == kVersion);
    CHECK(j["schema"] == kReportSchema);
    CHECK(j["provenance"]["config_hash"] == cfg.hash());
    CHECK(dump_canonical(to_json(report_from_json(j))) == dump_canonical(j));
    Json unversioned = j;
    unversioned.erase("version");
    CHECK_THROWS(report_from_json(unversioned));

    const std::string out = (dir.path / "out").string();
    const auto written = emit(r, out, {"json", "text"}, false);
    CHECK(written.size() == 2);
    const std::string first = read_file(fs::path(out) / "report.json");
    emit(r, out, {"json", "text"}, false);
    CHECK(read_file(fs::path(out) / "report.json") == first);
    CHECK(dump_canonical(to_json(run_pipeline(cfg))) == first);

    // A different configuration is refused unless forced.
    Report changed = r;
    changed.config.seed = 10;
    CHECK_THROWS_AS(emit(changed, out, {"json"}, false), ConfigError);
    CHECK_NOTHROW(emit(changed, out, {"json"}, true));

    // The fit artifact survives serialization.
    const FitArtifact fit = run_fit_stage(cfg);
    const FitArtifact back = fit_artifact_from_json(Json::parse(dump_canonical(to_json(fit))));
    CHECK(back.b == fit.b);
    CHECK(back.v_theta.data == fit.v_theta.data);
    CHECK(dump_canonical(to_json(build_report(back))) == dump_canonical(to_json(build_report(fit))));
}

TEST_CASE("pipeline notes and failures") {
    TempDir dir("notes");
    const MatchedSample s1 = simulate_gaussian_1d(1.0, 300, 54);
    const std::string csv = (dir.path / "one.csv").string();
    write_csv(csv, s1);
    const Report r = run_pipeline(config_for(csv, s1.names_x, s1.names_y));
    CHECK(r.rank_tests.empty());
    CHECK(std::find(r.notes.begin(), r.notes.end(), "rank test skipped: min(d_x, d_y) = 1") != r.notes.end());
    CHECK(r.shares.share_std.size() == 0);
    CHECK(render_text(r).find("no bootstrap replicates") != std::string::npos);

    std::mt19937_64 rng(55);
    Matrix x = random_matrix(50, 2, rng);
    x.col(1).setConstant(3.0);
    IngestResult data{MatchedSample::make(x, random_matrix(50, 1, rng)), {}};
    CHECK_THROWS_AS(run_fit_stage(config_for("mem", {"x1", "x2"}, {"y1"}), data), ZeroVarianceColumn);
}
