#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace affinity {

/// Regularized lower incomplete gamma P(s, x), series / continued fraction.
double regularized_gamma_p(double s, double x);

/// Regularized upper incomplete gamma Q(s, x) = 1 - P(s, x).
double regularized_gamma_q(double s, double x);

/// Survival function of the chi-square distribution with `df` degrees of freedom.
double chi2_survival(double statistic, double df);

/// Standard normal CDF.
double normal_cdf(double z);

/// Gumbel(location, scale) CDF exp(-exp(-(z - location) / scale)).
double gumbel_cdf(double z, double location, double scale = 1.0);

/// Kolmogorov-Smirnov distance between the empirical distribution of `draws`
/// and a continuous CDF.
template <class Cdf>
double ks_distance(std::vector<double> draws, Cdf cdf) {
    std::sort(draws.begin(), draws.end());
    const double n = static_cast<double>(draws.size());
    double d = 0.0;
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const double f = cdf(draws[i]);
        d = std::max(d, std::max(f - static_cast<double>(i) / n,
                                 static_cast<double>(i + 1) / n - f));
    }
    return d;
}

/// Pearson goodness-of-fit p-value for observed counts against expected
/// probabilities (df = bins - 1).
double chi2_goodness_of_fit(const std::vector<double>& observed,
                            const std::vector<double>& expected_probabilities);

}  // namespace affinity
