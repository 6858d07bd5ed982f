#pragma once

// End-to-end orchestration: ingest, standardize, fit, covariance, optional
// bootstrap, then the report tables. The fit stage is serializable so later
// stages (saliency, rank tests) can run on its JSON artifact alone.

#include <string>
#include <vector>

#include "affinity/core.hpp"
#include "affinity/estimator.hpp"
#include "affinity/io.hpp"

namespace affinity {

inline constexpr const char* kFitSchema = "affinity-fit/1";

/// Everything the later stages need, in standardized attribute units.
struct FitArtifact {
    RunConfig config;
    IngestReport ingest;
    ScalingRecord scaling;
    std::vector<std::string> names_x;
    std::vector<std::string> names_y;
    Index n = 0;
    Matrix b;  // affinity at unit heterogeneity
    Matrix sigma_xy;
    FitSummary fit;

    bool has_covariance = false;
    DoublyIndexedMatrix fisher;
    DoublyIndexedMatrix f_inv;
    DoublyIndexedMatrix k_xx;
    DoublyIndexedMatrix k_xy;
    DoublyIndexedMatrix k_yy;
    DoublyIndexedMatrix v_theta;
    Matrix theta;
    Vector s_x;
    Vector s_y;

    Index bootstrap_reps = 0;
    Index bootstrap_failed = 0;
    Matrix b_std;  // empty without bootstrap
    Matrix a_std;
    Vector share_std;

    std::vector<std::string> notes;
    std::vector<std::string> failures;
};

/// Estimator settings carried by a run configuration.
FitConfig make_fit_config(const RunConfig& cfg);

/// Fit stage on an already ingested sample. Throws ZeroVarianceColumn,
/// NotConverged and other module errors that make the fit meaningless;
/// covariance and bootstrap problems are recorded in `failures`.
FitArtifact run_fit_stage(const RunConfig& cfg, const IngestResult& data);
/// Reads cfg.input first.
FitArtifact run_fit_stage(const RunConfig& cfg);

Json to_json(const FitArtifact& fit);
FitArtifact fit_artifact_from_json(const Json& j);

/// A = B / ||B|| with delta-method standard errors, or B when sigma-normalized.
AffinityTable affinity_table(const FitArtifact& fit);
/// Saliency on the reported matrix with the sample variances.
void saliency_tables(const FitArtifact& fit, LoadingsTable& loadings, ShareTable& shares);
/// Tests p = 1 .. min(d_x, d_y) - 1; returns the estimated sorting dimension
/// (0 when a test needed for it aborted). Notes and failures are appended.
Index rank_sweep(const FitArtifact& fit, std::vector<RankRow>& rows,
                 std::vector<std::string>& notes, std::vector<std::string>& failures);

Report build_report(const FitArtifact& fit);
Report run_pipeline(const RunConfig& cfg);

}  // namespace affinity
