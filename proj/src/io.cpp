#include "affinity/io.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace affinity {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------- CSV

std::vector<std::string> split_fields(const std::string& line, const std::string& source,
                                      std::size_t line_no) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted)
        throw IoError(source + ":" + std::to_string(line_no) + ": unterminated quoted field");
    out.push_back(std::move(cur));
    return out;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

bool is_missing(const std::string& cell) {
    if (cell.empty()) return true;
    std::string lower(cell);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return lower == "na" || lower == "nan";
}

// NaN marks a missing cell.
double parse_cell(const std::string& raw, std::size_t line_no, const std::string& column) {
    const std::string cell = trim(raw);
    if (is_missing(cell)) return kNaN;
    double v = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    if (*begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw NonNumericCell(line_no, column, raw);
    return v;
}

struct ParsedTable {
    Matrix x;  // NaN where missing
    Matrix y;
    std::vector<std::size_t> lines;
    IngestReport report;
};

ParsedTable parse_table(std::istream& in, const ColumnMapping& mapping, const std::string& source) {
    if (mapping.x_cols.empty() || mapping.y_cols.empty())
        throw ConfigError("both x and y columns must be mapped");
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw IoError(source + ": missing header row");
    ++line_no;
    if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header = split_fields(line, source, line_no);
    for (auto& h : header) h = trim(h);

    std::map<std::string, std::size_t> position;
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (position.count(header[k]))
            throw IoError(source + ": duplicate column '" + header[k] + "' in header");
        position[header[k]] = k;
    }
    auto lookup = [&](const std::vector<std::string>& cols) {
        std::vector<std::size_t> idx;
        for (const auto& c : cols) {
            const auto it = position.find(c);
            if (it == position.end()) throw MissingColumn(c);
            idx.push_back(it->second);
        }
        return idx;
    };
    const auto xi = lookup(mapping.x_cols);
    const auto yi = lookup(mapping.y_cols);

    ParsedTable t;
    t.report.source = source;
    std::set<std::size_t> used(xi.begin(), xi.end());
    used.insert(yi.begin(), yi.end());
    for (std::size_t k = 0; k < header.size(); ++k)
        if (!used.count(k)) t.report.ignored_columns.push_back(header[k]);

    std::vector<std::vector<double>> xs, ys;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line, source, line_no);
        if (fields.size() != header.size())
            throw IoError(source + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(header.size()) + " fields, found " +
                          std::to_string(fields.size()));
        std::vector<double> xr, yr;
        for (std::size_t k = 0; k < xi.size(); ++k)
            xr.push_back(parse_cell(fields[xi[k]], line_no, mapping.x_cols[k]));
        for (std::size_t k = 0; k < yi.size(); ++k)
            yr.push_back(parse_cell(fields[yi[k]], line_no, mapping.y_cols[k]));
        xs.push_back(std::move(xr));
        ys.push_back(std::move(yr));
        t.lines.push_back(line_no);
    }
    if (in.bad()) throw IoError(source + ": read error");

    const Index n = static_cast<Index>(xs.size());
    t.x.resize(n, static_cast<Index>(xi.size()));
    t.y.resize(n, static_cast<Index>(yi.size()));
    for (Index r = 0; r < n; ++r) {
        for (Index c = 0; c < t.x.cols(); ++c) t.x(r, c) = xs[r][c];
        for (Index c = 0; c < t.y.cols(); ++c) t.y(r, c) = ys[r][c];
    }
    t.report.rows_read = n;
    return t;
}

Matrix select_rows(const Matrix& m, const std::vector<Index>& rows) {
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
    return out;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// ---------------------------------------------------------------- JSON helpers

Json number(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

double as_number(const Json& j) { return j.is_null() ? kNaN : j.get<double>(); }

Json strings(const std::vector<std::string>& v) { return Json(v); }

std::vector<std::string> strings_from(const Json& j) { return j.get<std::vector<std::string>>(); }

Json to_json(const IngestReport& r) {
    return {{"source", r.source},
            {"rows_read", r.rows_read},
            {"rows_dropped", r.rows_dropped},
            {"ignored_columns", strings(r.ignored_columns)}};
}

IngestReport ingest_from_json(const Json& j) {
    IngestReport r;
    r.source = j.at("source").get<std::string>();
    r.rows_read = j.at("rows_read").get<Index>();
    r.rows_dropped = j.at("rows_dropped").get<Index>();
    r.ignored_columns = strings_from(j.at("ignored_columns"));
    return r;
}

Json to_json(const FitSummary& f) {
    return {{"iterations", f.iterations},
            {"moment_gap", number(f.moment_gap)},
            {"degenerate", f.degenerate},
            {"compressed", f.compressed},
            {"support_x", f.support_x},
            {"support_y", f.support_y},
            {"min_fisher_eigenvalue", number(f.min_fisher_eigenvalue)},
            {"warnings", strings(f.warnings)}};
}

FitSummary fit_from_json(const Json& j) {
    FitSummary f;
    f.iterations = j.at("iterations").get<int>();
    f.moment_gap = as_number(j.at("moment_gap"));
    f.degenerate = j.at("degenerate").get<bool>();
    f.compressed = j.at("compressed").get<bool>();
    f.support_x = j.at("support_x").get<Index>();
    f.support_y = j.at("support_y").get<Index>();
    f.min_fisher_eigenvalue = as_number(j.at("min_fisher_eigenvalue"));
    f.warnings = strings_from(j.at("warnings"));
    return f;
}

Json to_json(const AffinityTable& t) {
    Json stars = Json::array();
    for (Index i = 0; i < t.estimate.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < t.estimate.cols(); ++j) row.push_back(t.significant(i, j));
        stars.push_back(std::move(row));
    }
    return {{"rows", strings(t.rows)},
            {"cols", strings(t.cols)},
            {"estimate", matrix_to_json(t.estimate)},
            {"std_error", matrix_to_json(t.std_error)},
            {"normalized", t.normalized},
            {"sigma", number(t.sigma)},
            {"significance_z", t.significance_z},
            {"significant", std::move(stars)}};
}

AffinityTable affinity_from_json(const Json& j) {
    AffinityTable t;
    t.rows = strings_from(j.at("rows"));
    t.cols = strings_from(j.at("cols"));
    t.estimate = matrix_from_json(j.at("estimate"));
    t.std_error = matrix_from_json(j.at("std_error"));
    t.normalized = j.at("normalized").get<bool>();
    t.sigma = as_number(j.at("sigma"));
    t.significance_z = j.at("significance_z").get<double>();
    return t;
}

Json to_json(const LoadingsTable& t) {
    return {{"names_x", strings(t.names_x)},
            {"names_y", strings(t.names_y)},
            {"loadings_x", matrix_to_json(t.loadings_x)},
            {"loadings_y", matrix_to_json(t.loadings_y)},
            {"lambda", vector_to_json(t.lambda)},
            {"shares", vector_to_json(t.shares)},
            {"cumulative", vector_to_json(t.cumulative)},
            {"degenerate_subspace", t.degenerate_subspace}};
}

LoadingsTable loadings_from_json(const Json& j) {
    LoadingsTable t;
    t.names_x = strings_from(j.at("names_x"));
    t.names_y = strings_from(j.at("names_y"));
    t.loadings_x = matrix_from_json(j.at("loadings_x"));
    t.loadings_y = matrix_from_json(j.at("loadings_y"));
    t.lambda = vector_from_json(j.at("lambda"));
    t.shares = vector_from_json(j.at("shares"));
    t.cumulative = vector_from_json(j.at("cumulative"));
    t.degenerate_subspace = j.at("degenerate_subspace").get<bool>();
    return t;
}

Json to_json(const ShareTable& t) {
    return {{"shares", vector_to_json(t.shares)},
            {"share_std", t.share_std.size() ? vector_to_json(t.share_std) : Json(nullptr)},
            {"reps", t.reps},
            {"failed", t.failed}};
}

ShareTable shares_from_json(const Json& j) {
    ShareTable t;
    t.shares = vector_from_json(j.at("shares"));
    if (!j.at("share_std").is_null()) t.share_std = vector_from_json(j.at("share_std"));
    t.reps = j.at("reps").get<Index>();
    t.failed = j.at("failed").get<Index>();
    return t;
}

Json to_json(const RankRow& r) {
    Json j = {{"p", r.p},
              {"statistic", number(r.statistic)},
              {"df", r.df},
              {"p_value", number(r.p_value)},
              {"degenerate", r.degenerate}};
    j["error"] = r.error.empty() ? Json(nullptr) : Json(r.error);
    return j;
}

RankRow rank_row_from_json(const Json& j) {
    RankRow r;
    r.p = j.at("p").get<Index>();
    r.statistic = as_number(j.at("statistic"));
    r.df = j.at("df").get<Index>();
    r.p_value = as_number(j.at("p_value"));
    r.degenerate = j.at("degenerate").get<bool>();
    if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
    return r;
}

// ---------------------------------------------------------------- text

std::string fixed(double v, int digits = 4) {
    if (std::isnan(v)) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string scientific(double v) {
    if (std::isnan(v)) return "-";
    std::ostringstream os;
    os << std::scientific << std::setprecision(3) << v;
    return os.str();
}

// Left-aligned first column, right-aligned others.
std::string render_grid(const std::vector<std::vector<std::string>>& rows) {
    std::size_t cols = 0;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    std::vector<std::size_t> width(cols, 0);
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    std::ostringstream os;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t c = 0; c < r.size(); ++c) {
            const std::string pad(width[c] - r[c].size(), ' ');
            if (c == 0)
                line += r[c] + pad;
            else
                line += "  " + pad + r[c];
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        os << line << '\n';
    }
    return os.str();
}

std::string index_label(Index k) { return "index " + std::to_string(k + 1); }

}  // namespace

// ---------------------------------------------------------------- CSV

IngestResult parse_csv(std::istream& in, const ColumnMapping& mapping, const std::string& source) {
    ParsedTable t = parse_table(in, mapping, source);
    std::vector<Index> keep;
    for (Index r = 0; r < t.x.rows(); ++r)
        if (!t.x.row(r).hasNaN() && !t.y.row(r).hasNaN()) keep.push_back(r);
    t.report.rows_dropped = t.report.rows_read - static_cast<Index>(keep.size());
    if (keep.empty())
        throw EmptyAfterFiltering(source + ": no complete rows among " +
                                  std::to_string(t.report.rows_read));
    IngestResult out;
    out.sample.x = select_rows(t.x, keep);
    out.sample.y = select_rows(t.y, keep);
    out.sample.names_x = mapping.x_cols;
    out.sample.names_y = mapping.y_cols;
    out.report = std::move(t.report);
    return out;
}

IngestResult ingest_csv(const std::string& path, const ColumnMapping& mapping) {
    auto in = open_input(path);
    return parse_csv(in, mapping, path);
}

PopulationIngest parse_population_csv(std::istream& in, const ColumnMapping& mapping,
                                      const std::string& source) {
    ParsedTable t = parse_table(in, mapping, source);
    std::vector<Index> couples, men, women;
    for (Index r = 0; r < t.x.rows(); ++r) {
        const bool x_any = t.x.row(r).hasNaN();
        const bool y_any = t.y.row(r).hasNaN();
        const bool x_all = t.x.row(r).array().isNaN().all();
        const bool y_all = t.y.row(r).array().isNaN().all();
        if (!x_any && !y_any)
            couples.push_back(r);
        else if (!x_any && y_all)
            men.push_back(r);
        else if (x_all && !y_any)
            women.push_back(r);
    }
    const Index kept = static_cast<Index>(couples.size() + men.size() + women.size());
    t.report.rows_dropped = t.report.rows_read - kept;
    if (couples.empty())
        throw EmptyAfterFiltering(source + ": no complete couples among " +
                                  std::to_string(t.report.rows_read) + " rows");
    PopulationIngest out;
    out.population.matched.x = select_rows(t.x, couples);
    out.population.matched.y = select_rows(t.y, couples);
    out.population.matched.names_x = mapping.x_cols;
    out.population.matched.names_y = mapping.y_cols;
    out.population.singles_x = select_rows(t.x, men);
    out.population.singles_y = select_rows(t.y, women);
    out.report = std::move(t.report);
    return out;
}

PopulationIngest ingest_population_csv(const std::string& path, const ColumnMapping& mapping) {
    auto in = open_input(path);
    return parse_population_csv(in, mapping, path);
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw IoError("cannot format number");
    return std::string(buf, ptr);
}

void write_csv(const std::string& path, const MatchedSample& sample) {
    sample.validate();
    std::string out;
    std::vector<std::string> names = sample.names_x;
    names.insert(names.end(), sample.names_y.begin(), sample.names_y.end());
    for (std::size_t k = 0; k < names.size(); ++k) out += (k ? "," : "") + csv_field(names[k]);
    out += '\n';
    for (Index r = 0; r < sample.size(); ++r) {
        for (Index c = 0; c < sample.dim_x(); ++c) out += (c ? "," : "") + format_double(sample.x(r, c));
        for (Index c = 0; c < sample.dim_y(); ++c) out += "," + format_double(sample.y(r, c));
        out += '\n';
    }
    write_file_atomic(path, out);
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + target.parent_path().string() + ": " +
                              ec.message());
    }
    const fs::path tmp = fs::path(path + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename " + tmp.string() + " to " + path);
    }
}

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
    if (input.empty()) throw ConfigError("input path is required");
    if (x_cols.empty() || y_cols.empty()) throw ConfigError("x and y columns are required");
    std::set<std::string> seen;
    for (const auto& c : x_cols)
        if (!seen.insert(c).second) throw ConfigError("column listed twice: " + c);
    for (const auto& c : y_cols)
        if (!seen.insert(c).second) throw ConfigError("column listed twice: " + c);
    if (!(tol > 0.0)) throw ConfigError("tol must be positive");
    if (max_iter < 1) throw ConfigError("max_iter must be positive");
    if (!(moment_tol > 0.0)) throw ConfigError("moment_tol must be positive");
    if (max_support < 2) throw ConfigError("max_support must be at least 2");
    if (bootstrap < 0) throw ConfigError("bootstrap replicates must be nonnegative");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
    if (!(significance_z > 0.0)) throw ConfigError("significance_z must be positive");
    if (formats.empty()) throw ConfigError("at least one output format is required");
    for (const auto& f : formats)
        if (f != "json" && f != "text") throw ConfigError("unknown format: " + f);
}

Json RunConfig::to_json() const {
    return {{"input", input},
            {"x_cols", x_cols},
            {"y_cols", y_cols},
            {"sigma_normalize", sigma_normalize},
            {"tol", tol},
            {"max_iter", max_iter},
            {"moment_tol", moment_tol},
            {"max_support", max_support},
            {"bootstrap", bootstrap},
            {"seed", seed},
            {"alpha", alpha},
            {"significance_z", significance_z},
            {"formats", formats}};
}

RunConfig RunConfig::from_json(const Json& j) {
    RunConfig c;
    c.input = j.at("input").get<std::string>();
    c.x_cols = j.at("x_cols").get<std::vector<std::string>>();
    c.y_cols = j.at("y_cols").get<std::vector<std::string>>();
    c.sigma_normalize = j.at("sigma_normalize").get<bool>();
    c.tol = j.at("tol").get<double>();
    c.max_iter = j.at("max_iter").get<int>();
    c.moment_tol = j.at("moment_tol").get<double>();
    c.max_support = j.at("max_support").get<Index>();
    c.bootstrap = j.at("bootstrap").get<Index>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.alpha = j.at("alpha").get<double>();
    c.significance_z = j.at("significance_z").get<double>();
    c.formats = j.at("formats").get<std::vector<std::string>>();
    return c;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string RunConfig::hash() const { return fnv1a_hex(to_json().dump()); }

// ---------------------------------------------------------------- report

bool AffinityTable::significant(Index i, Index j) const {
    const double se = std_error(i, j);
    return std::isfinite(se) && se > 0.0 && std::abs(estimate(i, j)) / se > significance_z;
}

Json matrix_to_json(const Matrix& m) {
    Json out = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
        out.push_back(std::move(row));
    }
    return out;
}

Matrix matrix_from_json(const Json& j) {
    if (!j.is_array()) throw InvalidArgument("matrix must be an array of rows");
    const Index rows = static_cast<Index>(j.size());
    const Index cols = rows ? static_cast<Index>(j.at(0).size()) : 0;
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        const Json& row = j.at(static_cast<std::size_t>(r));
        if (static_cast<Index>(row.size()) != cols) throw InvalidArgument("ragged matrix");
        for (Index c = 0; c < cols; ++c) m(r, c) = as_number(row.at(static_cast<std::size_t>(c)));
    }
    return m;
}

Json vector_to_json(const Vector& v) {
    Json out = Json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
    return out;
}

Vector vector_from_json(const Json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (Index i = 0; i < v.size(); ++i) v(i) = as_number(j.at(static_cast<std::size_t>(i)));
    return v;
}

Json table_to_json(const AffinityTable& t) { return to_json(t); }
Json table_to_json(const LoadingsTable& t) { return to_json(t); }
Json table_to_json(const ShareTable& t) { return to_json(t); }
Json table_to_json(const std::vector<RankRow>& rows) {
    Json out = Json::array();
    for (const auto& r : rows) out.push_back(to_json(r));
    return out;
}

Json to_json(const Report& r) {
    Json rank = Json::array();
    for (const auto& row : r.rank_tests) rank.push_back(to_json(row));
    return {{"schema", kReportSchema},
            {"version", kVersion},
            {"provenance",
             {{"version", kVersion},
              {"seed", r.config.seed},
              {"config_hash", r.config.hash()},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)}}},
            {"config", r.config.to_json()},
            {"ingest", to_json(r.ingest)},
            {"n", r.n},
            {"fit", to_json(r.fit)},
            {"affinity", to_json(r.affinity)},
            {"loadings", to_json(r.loadings)},
            {"shares", to_json(r.shares)},
            {"rank_tests", std::move(rank)},
            {"sorting_dimension", r.sorting_dimension},
            {"notes", strings(r.notes)},
            {"failures", strings(r.failures)}};
}

Report report_from_json(const Json& j) {
    if (!j.contains("version")) throw InvalidArgument("report has no version field");
    Report r;
    r.config = RunConfig::from_json(j.at("config"));
    r.ingest = ingest_from_json(j.at("ingest"));
    r.n = j.at("n").get<Index>();
    r.fit = fit_from_json(j.at("fit"));
    r.affinity = affinity_from_json(j.at("affinity"));
    r.loadings = loadings_from_json(j.at("loadings"));
    r.shares = shares_from_json(j.at("shares"));
    for (const auto& row : j.at("rank_tests")) r.rank_tests.push_back(rank_row_from_json(row));
    r.sorting_dimension = j.at("sorting_dimension").get<Index>();
    r.notes = strings_from(j.at("notes"));
    r.failures = strings_from(j.at("failures"));
    return r;
}

std::string dump_canonical(const Json& j) { return j.dump(2) + "\n"; }

std::string render_affinity(const AffinityTable& a) {
    std::ostringstream os;
    os << (a.normalized ? "Affinity matrix A (||A|| = 1), sigma = " + fixed(a.sigma)
                        : std::string("Affinity matrix B (sigma = 1)"))
       << '\n';
    os << "standard errors in parentheses; * marks |estimate| / se > " << fixed(a.significance_z, 2)
       << '\n';
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> head{""};
    head.insert(head.end(), a.cols.begin(), a.cols.end());
    grid.push_back(head);
    for (Index i = 0; i < a.estimate.rows(); ++i) {
        std::vector<std::string> est{a.rows[static_cast<std::size_t>(i)]};
        std::vector<std::string> se{""};
        for (Index j = 0; j < a.estimate.cols(); ++j) {
            est.push_back(fixed(a.estimate(i, j)) + (a.significant(i, j) ? "*" : " "));
            se.push_back("(" + fixed(a.std_error(i, j)) + ") ");
        }
        grid.push_back(est);
        grid.push_back(se);
    }
    os << render_grid(grid);
    return os.str();
}

std::string render_saliency(const LoadingsTable& l, const ShareTable& s) {
    std::ostringstream os;
    os << "Saliency loadings (rows: attributes, columns: indices)\n";
    const Index d = l.lambda.size();
    {
        std::vector<std::vector<std::string>> grid;
        std::vector<std::string> head{""};
        for (Index k = 0; k < d; ++k) head.push_back(index_label(k));
        grid.push_back(head);
        grid.push_back({"men"});
        for (std::size_t i = 0; i < l.names_x.size(); ++i) {
            std::vector<std::string> row{"  " + l.names_x[i]};
            for (Index k = 0; k < d; ++k) row.push_back(fixed(l.loadings_x(k, static_cast<Index>(i))));
            grid.push_back(row);
        }
        grid.push_back({"women"});
        for (std::size_t i = 0; i < l.names_y.size(); ++i) {
            std::vector<std::string> row{"  " + l.names_y[i]};
            for (Index k = 0; k < d; ++k) row.push_back(fixed(l.loadings_y(k, static_cast<Index>(i))));
            grid.push_back(row);
        }
        std::vector<std::string> sv{"singular value"}, cum{"cumulative share"};
        for (Index k = 0; k < d; ++k) {
            sv.push_back(fixed(l.lambda(k)));
            cum.push_back(fixed(l.cumulative(k)));
        }
        grid.push_back(sv);
        grid.push_back(cum);
        os << render_grid(grid);
        if (l.degenerate_subspace)
            os << "note: tied singular values; loadings within a tied block are not unique\n";
    }
    os << "\nShares of joint utility by index\n";
    std::vector<std::vector<std::string>> grid{{""}, {"share"}};
    for (Index k = 0; k < s.shares.size(); ++k) {
        grid[0].push_back(index_label(k));
        grid[1].push_back(fixed(s.shares(k)));
    }
    if (s.share_std.size()) {
        grid.push_back({"std"});
        for (Index k = 0; k < s.share_std.size(); ++k) grid.back().push_back(fixed(s.share_std(k)));
    }
    os << render_grid(grid);
    if (s.share_std.size())
        os << "bootstrap replicates: " << s.reps - s.failed << " of " << s.reps << '\n';
    else
        os << "note: no bootstrap replicates; standard deviations omitted\n";
    return os.str();
}

std::string render_rank_tests(const std::vector<RankRow>& rows, double alpha,
                              Index sorting_dimension) {
    std::ostringstream os;
    os << "Rank tests (H0: rank = p), level " << fixed(alpha, 2) << '\n';
    if (rows.empty()) {
        os << "note: no rank hypotheses to test\n";
    } else {
        std::vector<std::vector<std::string>> grid{{"p", "statistic", "df", "p-value", "note"}};
        for (const auto& t : rows) {
            if (!t.error.empty()) {
                grid.push_back({std::to_string(t.p), "-", std::to_string(t.df), "-", t.error});
                continue;
            }
            grid.push_back({std::to_string(t.p), fixed(t.statistic, 2), std::to_string(t.df),
                            scientific(t.p_value), t.degenerate ? "degenerate covariance" : ""});
        }
        os << render_grid(grid);
    }
    os << "estimated sorting dimension: "
       << (sorting_dimension > 0 ? std::to_string(sorting_dimension) : std::string("undetermined"))
       << '\n';
    return os.str();
}

std::string render_text(const Report& r) {
    std::ostringstream os;
    os << "Affinity estimation report (version " << kVersion << ")\n";
    os << "input: " << r.ingest.source << "; couples used: " << r.n
       << "; rows dropped (missing values): " << r.ingest.rows_dropped << '\n';
    if (!r.ingest.ignored_columns.empty()) {
        os << "ignored columns:";
        for (const auto& c : r.ingest.ignored_columns) os << ' ' << c;
        os << '\n';
    }
    os << "seed: " << r.config.seed << "; config hash: " << r.config.hash() << "\n\n";
    os << render_affinity(r.affinity) << '\n';
    os << render_saliency(r.loadings, r.shares) << '\n';
    os << render_rank_tests(r.rank_tests, r.config.alpha, r.sorting_dimension);
    os << "\nFit: " << r.fit.iterations
       << (r.fit.iterations == 1 ? " Newton iteration" : " Newton iterations") << ", moment gap "
       << scientific(r.fit.moment_gap) << ", support " << r.fit.support_x << " x "
       << r.fit.support_y << (r.fit.compressed ? " (compressed)" : "") << '\n';
    for (const auto& w : r.fit.warnings) os << "warning: " << w << '\n';
    for (const auto& n : r.notes) os << "note: " << n << '\n';
    for (const auto& f : r.failures) os << "failure: " << f << '\n';
    return os.str();
}

void claim_output_dir(const std::string& dir, const RunConfig& cfg, bool force) {
    claim_output_dir(dir, cfg.to_json(), force);
}

void claim_output_dir(const std::string& dir, const Json& config, bool force) {
    const fs::path marker = fs::path(dir) / "config.json";
    const std::string hash = fnv1a_hex(config.dump());
    if (fs::exists(marker)) {
        std::ifstream in(marker, std::ios::binary);
        Json existing;
        try {
            existing = Json::parse(in);
        } catch (const Json::exception&) {
            if (!force) throw IoError(marker.string() + ": unreadable config record; use --force");
        }
        const std::string old = existing.value("config_hash", std::string());
        if (old != hash && !force)
            throw ConfigError("output directory " + dir + " holds results of config " + old +
                              " (this run: " + hash + "); use --force to overwrite");
    }
    const Json record = {{"version", kVersion}, {"config_hash", hash}, {"config", config}};
    write_file_atomic(marker.string(), dump_canonical(record));
}

std::vector<std::string> emit(const Report& report, const std::string& dir,
                              const std::vector<std::string>& formats, bool force) {
    claim_output_dir(dir, report.config, force);
    std::vector<std::string> written;
    for (const auto& f : formats) {
        if (f == "json") {
            const std::string path = (fs::path(dir) / "report.json").string();
            write_file_atomic(path, dump_canonical(to_json(report)));
            written.push_back(path);
        } else if (f == "text") {
            const std::string path = (fs::path(dir) / "report.txt").string();
            write_file_atomic(path, render_text(report));
            written.push_back(path);
        } else {
            throw ConfigError("unknown format: " + f);
        }
    }
    return written;
}

}  // namespace affinity
