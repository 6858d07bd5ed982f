#pragma once

// Data ingestion, run configuration, reports and their JSON / text forms.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "affinity/core.hpp"
#include "affinity/singles.hpp"

namespace affinity {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kReportSchema = "affinity-report/1";

using Json = nlohmann::json;

// ---------------------------------------------------------------- CSV

struct ColumnMapping {
    std::vector<std::string> x_cols;
    std::vector<std::string> y_cols;
};

struct IngestReport {
    std::string source;
    Index rows_read = 0;
    Index rows_dropped = 0;  // rows with a missing mapped value
    std::vector<std::string> ignored_columns;
};

struct IngestResult {
    MatchedSample sample;
    IngestReport report;
};

/// Comma-separated, header row, '.' decimals. Empty cells, NA and nan are
/// missing. Throws MissingColumn, NonNumericCell, EmptyAfterFiltering, IoError.
IngestResult ingest_csv(const std::string& path, const ColumnMapping& mapping);
IngestResult parse_csv(std::istream& in, const ColumnMapping& mapping,
                       const std::string& source = "<stream>");

struct PopulationIngest {
    PopulationWithSingles population;
    IngestReport report;
};

/// Rows whose y columns are all missing are single men and rows whose x
/// columns are all missing are single women; other incomplete rows are dropped.
PopulationIngest ingest_population_csv(const std::string& path, const ColumnMapping& mapping);
PopulationIngest parse_population_csv(std::istream& in, const ColumnMapping& mapping,
                                      const std::string& source = "<stream>");

/// Shortest representation that parses back to the same double.
std::string format_double(double v);

/// Writes x columns then y columns under their attribute names.
void write_csv(const std::string& path, const MatchedSample& sample);

/// Writes through a temporary file in the same directory and renames it.
void write_file_atomic(const std::string& path, const std::string& contents);

// ---------------------------------------------------------------- config

struct RunConfig {
    std::string input;
    std::vector<std::string> x_cols;
    std::vector<std::string> y_cols;
    bool sigma_normalize = false;  // report B (sigma = 1) instead of A with ||A|| = 1
    double tol = 1e-10;            // IPFP marginal tolerance
    int max_iter = 10000;          // IPFP iteration cap
    double moment_tol = 1e-6;
    Index max_support = 3000;
    Index bootstrap = 0;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    double significance_z = 1.96;
    std::string out;
    std::vector<std::string> formats{"json", "text"};
    bool force = false;

    void validate() const;
    /// Canonical JSON of every field that affects results (excludes out, force).
    Json to_json() const;
    static RunConfig from_json(const Json& j);
    /// FNV-1a 64-bit hash of the canonical JSON, as 16 hex digits.
    std::string hash() const;
};

std::string fnv1a_hex(const std::string& text);

// ---------------------------------------------------------------- report

struct AffinityTable {
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    Matrix estimate;
    Matrix std_error;  // NaN where unavailable
    bool normalized = true;  // estimate is A (||A|| = 1) rather than B
    double sigma = 1.0;
    double significance_z = 1.96;

    bool significant(Index i, Index j) const;
};

struct LoadingsTable {
    std::vector<std::string> names_x;
    std::vector<std::string> names_y;
    Matrix loadings_x;  // row k: index k over the x attributes
    Matrix loadings_y;
    Vector lambda;
    Vector shares;
    Vector cumulative;
    bool degenerate_subspace = false;
};

struct ShareTable {
    Vector shares;
    Vector share_std;  // empty without bootstrap
    Index reps = 0;
    Index failed = 0;
};

struct RankRow {
    Index p = 0;
    double statistic = 0.0;
    Index df = 0;
    double p_value = 1.0;
    bool degenerate = false;
    std::string error;  // non-empty when the test for this p aborted
};

struct FitSummary {
    int iterations = 0;
    double moment_gap = 0.0;
    bool degenerate = false;
    bool compressed = false;
    Index support_x = 0;
    Index support_y = 0;
    double min_fisher_eigenvalue = 0.0;
    std::vector<std::string> warnings;
};

struct Report {
    RunConfig config;
    IngestReport ingest;
    Index n = 0;
    FitSummary fit;
    AffinityTable affinity;
    LoadingsTable loadings;
    ShareTable shares;
    std::vector<RankRow> rank_tests;
    Index sorting_dimension = 0;
    std::vector<std::string> notes;
    std::vector<std::string> failures;

    bool partial_failure() const { return !failures.empty(); }
};

Json to_json(const Report& report);
Report report_from_json(const Json& j);

/// Aligned text tables; significant affinity entries are starred.
std::string render_text(const Report& report);
std::string render_affinity(const AffinityTable& table);
std::string render_saliency(const LoadingsTable& loadings, const ShareTable& shares);
std::string render_rank_tests(const std::vector<RankRow>& rows, double alpha,
                              Index sorting_dimension);

Json table_to_json(const AffinityTable& table);
Json table_to_json(const LoadingsTable& table);
Json table_to_json(const ShareTable& table);
Json table_to_json(const std::vector<RankRow>& rows);

/// Writes report.json and / or report.txt into `dir` (created if needed).
/// Refuses to write into a directory holding outputs of a different config
/// unless `force` is set. Returns the written paths.
std::vector<std::string> emit(const Report& report, const std::string& dir,
                              const std::vector<std::string>& formats, bool force);

/// Checks / records the config hash of an output directory (config.json).
/// Throws ConfigError when it holds a different hash and `force` is not set.
void claim_output_dir(const std::string& dir, const RunConfig& cfg, bool force);
void claim_output_dir(const std::string& dir, const Json& config, bool force);

/// Canonical text of a JSON value: sorted keys, two-space indent, newline.
std::string dump_canonical(const Json& j);

Json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);
Json vector_to_json(const Vector& v);
Vector vector_from_json(const Json& j);

}  // namespace affinity
