#include "affinity/singles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace affinity {

namespace {

AttributeBins make_bins(std::vector<double> values, int bins) {
    AttributeBins out;
    std::sort(values.begin(), values.end());
    const std::set<double> distinct(values.begin(), values.end());
    if (static_cast<int>(distinct.size()) <= bins) {
        out.categorical = true;
        out.values.assign(distinct.begin(), distinct.end());
        return out;
    }
    const std::size_t n = values.size();
    for (int k = 1; k < bins; ++k) {
        const std::size_t idx = std::min(n - 1, (n * static_cast<std::size_t>(k)) / bins);
        const double edge = values[idx];
        if (out.edges.empty() || edge > out.edges.back()) out.edges.push_back(edge);
    }
    return out;
}

std::vector<AttributeBins> side_bins(const Matrix& a, const Matrix& b, int bins) {
    std::vector<AttributeBins> out;
    for (Index c = 0; c < a.cols(); ++c) {
        std::vector<double> v;
        v.reserve(static_cast<std::size_t>(a.rows() + b.rows()));
        for (Index r = 0; r < a.rows(); ++r) v.push_back(a(r, c));
        for (Index r = 0; r < b.rows(); ++r) v.push_back(b(r, c));
        out.push_back(make_bins(std::move(v), bins));
    }
    return out;
}

Index cells(const std::vector<AttributeBins>& bins) {
    Index n = 1;
    for (const auto& b : bins) n *= b.count();
    return n;
}

Index cell(const std::vector<AttributeBins>& bins, const Vector& attributes) {
    if (static_cast<Index>(bins.size()) != attributes.size())
        throw DimensionMismatch("attribute vector does not match the binning");
    Index idx = 0;
    for (std::size_t k = 0; k < bins.size(); ++k)
        idx = idx * bins[k].count() + bins[k].locate(attributes(static_cast<Index>(k)));
    return idx;
}

void check_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw InvalidArgument("sigma must be positive and finite");
}

// log(f0 / (fbar - f0)) per cell with the error taxonomy of the module.
Vector single_log_odds(const Vector& singles, const Vector& total) {
    Vector out(singles.size());
    for (Index k = 0; k < singles.size(); ++k) {
        const auto bin = static_cast<std::size_t>(k);
        if (!(total(k) > 0.0)) throw EmptyBin(bin);
        if (!(singles(k) > 0.0)) throw ZeroSinglesBin(bin);
        if (!(total(k) - singles(k) > 0.0)) throw AllSingleBin(bin);
        out(k) = std::log(singles(k) / (total(k) - singles(k)));
    }
    return out;
}

}  // namespace

void PopulationWithSingles::validate() const {
    matched.validate();
    if (singles_x.rows() > 0 && singles_x.cols() != matched.dim_x())
        throw DimensionMismatch("single men have the wrong number of attributes");
    if (singles_y.rows() > 0 && singles_y.cols() != matched.dim_y())
        throw DimensionMismatch("single women have the wrong number of attributes");
    if (!singles_x.allFinite() || !singles_y.allFinite())
        throw InvalidArgument("singles contain non-finite values");
}

Index AttributeBins::count() const {
    return categorical ? static_cast<Index>(values.size()) : static_cast<Index>(edges.size()) + 1;
}

Index AttributeBins::locate(double value) const {
    if (categorical) {
        const auto it = std::lower_bound(values.begin(), values.end(), value);
        if (it == values.end() || *it != value)
            throw InvalidArgument("value is not a level of a categorical attribute");
        return static_cast<Index>(it - values.begin());
    }
    // Cell k holds (edge_{k-1}, edge_k].
    return static_cast<Index>(std::lower_bound(edges.begin(), edges.end(), value) - edges.begin());
}

Index Binning::cells_x() const { return cells(x); }
Index Binning::cells_y() const { return cells(y); }
Index Binning::cell_x(const Vector& attributes) const { return cell(x, attributes); }
Index Binning::cell_y(const Vector& attributes) const { return cell(y, attributes); }

TypeTable TypeTable::from_counts(Matrix matched, Vector single_x, Vector single_y) {
    if (matched.rows() != single_x.size() || matched.cols() != single_y.size())
        throw DimensionMismatch("type table shapes disagree");
    if ((matched.array() < 0.0).any() || (single_x.array() < 0.0).any() ||
        (single_y.array() < 0.0).any())
        throw InvalidArgument("type table counts must be nonnegative");
    TypeTable t;
    t.matched = std::move(matched);
    t.single_x = std::move(single_x);
    t.single_y = std::move(single_y);
    return t;
}

TypeTable tabulate(const PopulationWithSingles& population, const BinningConfig& cfg) {
    population.validate();
    if (cfg.bins_per_attribute < 1) throw InvalidArgument("bins_per_attribute must be >= 1");
    if (cfg.laplace < 0.0) throw InvalidArgument("laplace pseudo-count must be >= 0");
    const MatchedSample& m = population.matched;
    TypeTable t;
    t.binning.x = side_bins(m.x, population.singles_x, cfg.bins_per_attribute);
    t.binning.y = side_bins(m.y, population.singles_y, cfg.bins_per_attribute);
    const Index cx = t.binning.cells_x();
    const Index cy = t.binning.cells_y();
    t.matched = Matrix::Constant(cx, cy, cfg.laplace);
    t.single_x = Vector::Constant(cx, cfg.laplace);
    t.single_y = Vector::Constant(cy, cfg.laplace);
    for (Index r = 0; r < m.size(); ++r)
        t.matched(t.binning.cell_x(m.x.row(r).transpose()), t.binning.cell_y(m.y.row(r).transpose())) += 1.0;
    for (Index r = 0; r < population.singles_x.rows(); ++r)
        t.single_x(t.binning.cell_x(population.singles_x.row(r).transpose())) += 1.0;
    for (Index r = 0; r < population.singles_y.rows(); ++r)
        t.single_y(t.binning.cell_y(population.singles_y.row(r).transpose())) += 1.0;
    return t;
}

ReservationUtilities reservation_utilities(const TypeTable& table, double sigma,
                                           const Gauge& gauge) {
    check_sigma(sigma);
    const Index cx = table.single_x.size();
    const Index cy = table.single_y.size();
    if ((gauge.c.size() != 0 && gauge.c.size() != cx) || (gauge.d.size() != 0 && gauge.d.size() != cy))
        throw DimensionMismatch("gauge does not match the number of cells");
    ReservationUtilities out;
    out.sigma = sigma;
    out.gauge = gauge;
    out.phi_x_empty = single_log_odds(table.single_x, table.total_x());
    out.phi_empty_y = single_log_odds(table.single_y, table.total_y());
    if (gauge.c.size() != 0) out.phi_x_empty += gauge.c;
    if (gauge.d.size() != 0) out.phi_empty_y += gauge.d;
    out.phi_x_empty *= 0.5 * sigma;
    out.phi_empty_y *= 0.5 * sigma;
    return out;
}

Matrix matching_surplus(const TypeTable& table, const Matrix& coupling, double sigma) {
    check_sigma(sigma);
    const Index cx = table.single_x.size();
    const Index cy = table.single_y.size();
    if (coupling.rows() != cx || coupling.cols() != cy)
        throw DimensionMismatch("coupling does not match the type table");
    const Vector odds_x = single_log_odds(table.single_x, table.total_x());
    const Vector odds_y = single_log_odds(table.single_y, table.total_y());
    const Vector row = coupling.rowwise().sum();
    const Vector col = coupling.colwise().sum().transpose();
    Matrix s(cx, cy);
    for (Index i = 0; i < cx; ++i)
        for (Index j = 0; j < cy; ++j) {
            const double w = coupling(i, j);
            if (!(w > 0.0)) {
                s(i, j) = -std::numeric_limits<double>::infinity();
                continue;
            }
            // pi(y|x) (fbar - f0) / f0 = pi(y|x) / exp(odds_x), likewise for y.
            s(i, j) = 0.5 * sigma *
                      (std::log(w / row(i)) - odds_x(i) + std::log(w / col(j)) - odds_y(j));
        }
    return s;
}

Matrix matching_surplus(const TypeTable& table, double sigma) {
    return matching_surplus(table, table.matched, sigma);
}

Matrix joint_utility(const TypeTable& table, double sigma, const Gauge& gauge) {
    const ReservationUtilities r = reservation_utilities(table, sigma, gauge);
    Matrix phi = matching_surplus(table, sigma);
    phi.colwise() += r.phi_x_empty;
    phi.rowwise() += r.phi_empty_y.transpose();
    return phi;
}

ExAnteSurplus exante_surplus(const TypeTable& table) {
    auto side = [](const Vector& singles, const Vector& total) {
        Vector out(singles.size());
        for (Index k = 0; k < singles.size(); ++k) {
            const auto bin = static_cast<std::size_t>(k);
            if (!(total(k) > 0.0)) throw EmptyBin(bin);
            if (!(singles(k) > 0.0)) throw ZeroSinglesBin(bin);
            out(k) = std::log(total(k) / singles(k));
        }
        return out;
    };
    return {side(table.single_x, table.total_x()), side(table.single_y, table.total_y())};
}

}  // namespace affinity
