#include "affinity/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "affinity/errors.hpp"

namespace affinity {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 10000;

// P(s, x) by its power series, valid for x < s + 1.
double gamma_p_series(double s, double x) {
    double term = 1.0 / s;
    double sum = term;
    for (int k = 1; k < kMaxTerms; ++k) {
        term *= x / (s + k);
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Q(s, x) by the modified Lentz continued fraction, valid for x >= s + 1.
double gamma_q_fraction(double s, double x) {
    constexpr double tiny = std::numeric_limits<double>::min() / kEps;
    double b = x + 1.0 - s;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxTerms; ++i) {
        const double an = -i * (i - s);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
}

}  // namespace

double regularized_gamma_p(double s, double x) {
    if (!(s > 0.0) || x < 0.0) throw InvalidArgument("regularized_gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    if (x < s + 1.0) return gamma_p_series(s, x);
    return 1.0 - gamma_q_fraction(s, x);
}

double regularized_gamma_q(double s, double x) {
    if (!(s > 0.0) || x < 0.0) throw InvalidArgument("regularized_gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    if (x < s + 1.0) return 1.0 - gamma_p_series(s, x);
    return gamma_q_fraction(s, x);
}

double chi2_survival(double statistic, double df) {
    if (!(df > 0.0)) throw InvalidArgument("chi2_survival: df must be positive");
    if (statistic <= 0.0) return 1.0;
    return regularized_gamma_q(0.5 * df, 0.5 * statistic);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double gumbel_cdf(double z, double location, double scale) {
    return std::exp(-std::exp(-(z - location) / scale));
}

double chi2_goodness_of_fit(const std::vector<double>& observed,
                            const std::vector<double>& expected_probabilities) {
    if (observed.size() != expected_probabilities.size() || observed.size() < 2)
        throw InvalidArgument("chi2_goodness_of_fit: need matching bins (>= 2)");
    double total = 0.0;
    for (double o : observed) total += o;
    double stat = 0.0;
    for (std::size_t k = 0; k < observed.size(); ++k) {
        const double e = total * expected_probabilities[k];
        if (!(e > 0.0)) throw InvalidArgument("chi2_goodness_of_fit: empty expected bin");
        stat += (observed[k] - e) * (observed[k] - e) / e;
    }
    return chi2_survival(stat, static_cast<double>(observed.size() - 1));
}

}  // namespace affinity
