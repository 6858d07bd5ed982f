#pragma once

// Synthetic markets with known answers: the Gaussian-quadratic closed form,
// the Poisson acquaintance process behind continuous logit choice, and a
// discrete Choo-Siow market with singles.

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "affinity/core.hpp"
#include "affinity/singles.hpp"

namespace affinity {

/// Correlation t = sqrt(sigma^2 / 4 + 1) - sigma / 2 of the 1-d Gaussian
/// equilibrium with Phi = xy; solves t / (1 - t^2) = 1 / sigma.
double gaussian_slope(double sigma);

/// x ~ N(0, 1), y = t x + sqrt(1 - t^2) eps. sigma = 0 gives y = x.
MatchedSample simulate_gaussian_1d(double sigma, Index n, std::uint64_t seed);

struct GaussianQuadraticSpec {
    Matrix b;  // B = A / sigma
    Index n = 0;
    std::uint64_t seed = 0;
};

/// Cross-covariance C of the Gaussian equilibrium with standard normal
/// marginals: B = (I - C C')^{-1} C, solved through the SVD of B.
Matrix gaussian_cross_covariance(const Matrix& b);

/// x ~ N(0, I), y = C'x + L eps with L L' = I - C'C.
MatchedSample simulate_gaussian(const GaussianQuadraticSpec& spec);

struct PoissonLogitSpec {
    std::function<double(double)> utility;  // U(y) on [lower, upper]
    double lower = 0.0;
    double upper = 1.0;
    double utility_bound = 0.0;  // sup U over the domain
    // Initial truncation of the Gumbel marks. NaN selects the level whose
    // expected number of points is 50.
    double epsilon_min = std::numeric_limits<double>::quiet_NaN();
    int max_retries = 1000;
    std::uint64_t seed = 0;
};

struct ChoiceSimulation {
    std::vector<double> choices;     // argmax y per trial
    std::vector<double> max_values;  // Z = max (U(y) + eps) per trial
    long retries = 0;                // truncation levels lowered, summed over trials
};

/// Each trial samples the acquaintance process restricted to marks above a
/// truncation level and returns the best offer. The level is lowered one unit
/// at a time (adding the points in the new band) until the best value exceeds
/// utility_bound + level, which makes the argmax exact. Throws NoAcquaintance
/// when max_retries is exhausted.
ChoiceSimulation simulate_poisson_logit_choice(const PoissonLogitSpec& spec, Index trials);

/// Equilibrium masses of a discrete market with singles:
/// mu(x, y) = sqrt(mu(x, 0) mu(0, y)) exp(surplus(x, y) / sigma).
struct ChooSiowEquilibrium {
    Matrix matched;
    Vector single_x;
    Vector single_y;
};

ChooSiowEquilibrium solve_choo_siow(const Matrix& surplus, const Vector& men, const Vector& women,
                                    double sigma = 2.0, double tol = 1e-13, int max_iter = 100000);

struct DiscreteMarketSpec {
    Matrix surplus;   // Phi(x, y) - Phi(x, 0) - Phi(0, y) per type pair
    Vector men;       // mass of each man type
    Vector women;     // mass of each woman type
    Matrix types_x;   // attribute vector of each man type (one row per type)
    Matrix types_y;
    double sigma = 2.0;
    Index households = 0;  // households to draw; 0 uses the rounded equilibrium total
    std::uint64_t seed = 0;
};

/// Draws households (couples, single men, single women) from the equilibrium
/// shares by multinomial sampling.
PopulationWithSingles simulate_discrete_choo_siow(const DiscreteMarketSpec& spec);

}  // namespace affinity
