#pragma once

// Markets where singles are observed: reservation utilities and the utility
// surplus from matching, identified from density ratios over attribute cells.

#include <string>
#include <vector>

#include "affinity/core.hpp"

namespace affinity {

/// Matched couples plus unmatched men and women. The two sides may have
/// different total masses.
struct PopulationWithSingles {
    MatchedSample matched;
    Matrix singles_x;
    Matrix singles_y;

    void validate() const;
};

struct BinningConfig {
    int bins_per_attribute = 5;
    // Pseudo-count added to every matched and single cell. Off by default:
    // empty cells raise errors instead of being smoothed.
    double laplace = 0.0;
};

/// Cells of one attribute: either its distinct values (when there are at
/// most `bins_per_attribute` of them) or quantile intervals.
struct AttributeBins {
    bool categorical = false;
    std::vector<double> values;  // categorical levels, ascending
    std::vector<double> edges;   // interior quantile cut points, ascending

    Index count() const;
    Index locate(double value) const;
};

/// Mixed-radix product of per-attribute cells (first attribute most significant).
struct Binning {
    std::vector<AttributeBins> x;
    std::vector<AttributeBins> y;

    Index cells_x() const;
    Index cells_y() const;
    Index cell_x(const Vector& attributes) const;
    Index cell_y(const Vector& attributes) const;
};

/// Counts per cell: mu(x, y) matched couples, mu(x, 0) single men, mu(0, y)
/// single women.
struct TypeTable {
    Matrix matched;
    Vector single_x;
    Vector single_y;
    Binning binning;

    /// Table for a purely discrete market given directly as masses.
    static TypeTable from_counts(Matrix matched, Vector single_x, Vector single_y);

    Vector total_x() const { return matched.rowwise().sum() + single_x; }
    Vector total_y() const { return matched.colwise().sum().transpose() + single_y; }
};

TypeTable tabulate(const PopulationWithSingles& population, const BinningConfig& cfg = {});

/// The undetermined additive functions c(x), d(y). Empty vectors mean zero.
struct Gauge {
    Vector c;
    Vector d;
    std::string label = "c = 0, d = 0";
};

struct ReservationUtilities {
    Vector phi_x_empty;  // Phi(x, 0) per x cell
    Vector phi_empty_y;  // Phi(0, y) per y cell
    double sigma = 1.0;
    Gauge gauge;  // reported with the values, which depend on it
};

/// Phi(x, 0) = (sigma / 2) (log(f0 / (fbar - f0)) + c(x)) and symmetrically
/// for women. Throws EmptyBin, AllSingleBin (fbar = f0) or ZeroSinglesBin.
ReservationUtilities reservation_utilities(const TypeTable& table, double sigma,
                                           const Gauge& gauge = {});

/// Gauge-free surplus Phi(x, y) - Phi(x, 0) - Phi(0, y):
/// (sigma / 2) log[pi(y|x) (fbar - f0) / f0 * pi(x|y) (gbar - g0) / g0]
/// with pi the empirical matched distribution. Cells without matches give -inf.
Matrix matching_surplus(const TypeTable& table, double sigma);

/// Same, with the conditional choice probabilities taken from `coupling`, a
/// joint distribution over the (x cell, y cell) grid.
Matrix matching_surplus(const TypeTable& table, const Matrix& coupling, double sigma);

/// Joint utility Phi(x, y) = surplus + Phi(x, 0) + Phi(0, y) under a gauge.
Matrix joint_utility(const TypeTable& table, double sigma, const Gauge& gauge = {});

struct ExAnteSurplus {
    Vector u;  // log fbar(x) / f0(x)
    Vector v;  // log gbar(y) / g0(y)
};

/// Throws EmptyBin or ZeroSinglesBin.
ExAnteSurplus exante_surplus(const TypeTable& table);

}  // namespace affinity
