#pragma once

#include <cmath>
#include <random>

#include "affinity/core.hpp"

namespace testing_helpers {

using affinity::DiscreteMarginal;
using affinity::Index;
using affinity::Matrix;
using affinity::Vector;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
    return m;
}

inline Vector random_weights(Index m, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ud(0.2, 1.0);
    Vector w(m);
    for (Index i = 0; i < m; ++i) w(i) = ud(rng);
    return w / w.sum();
}

// Random marginal on a centered support.
inline DiscreteMarginal random_marginal(Index m, Index d, std::mt19937_64& rng) {
    DiscreteMarginal p{random_weights(m, rng), random_matrix(m, d, rng)};
    const Vector mean = p.support.transpose() * p.weights;
    p.support.rowwise() -= mean.transpose();
    return p;
}

// Equally spaced grid on [-half_width, half_width] with weights
// proportional to the standard normal density, recentered and rescaled so
// the discrete law has mean 0 and variance 1.
inline DiscreteMarginal normal_grid(Index m, double half_width = 6.0) {
    Matrix s(m, 1);
    Vector w(m);
    for (Index i = 0; i < m; ++i) {
        s(i, 0) = -half_width + 2.0 * half_width * static_cast<double>(i) / static_cast<double>(m - 1);
        w(i) = std::exp(-0.5 * s(i, 0) * s(i, 0));
    }
    w /= w.sum();
    const double mean = w.dot(s.col(0));
    s.array() -= mean;
    const double sd = std::sqrt(w.dot(s.col(0).cwiseAbs2()));
    s /= sd;
    return {w, s};
}

// Slope of the regression of E[Y | X] on X under a 1-d coupling.
inline double conditional_mean_slope(const affinity::Coupling& c) {
    const Vector p = c.row_sums();
    const Vector x = c.rows.support.col(0);
    const Vector cond = c.pi * c.cols.support.col(0);  // p(x) E[Y | x]
    return x.dot(cond) / p.dot(x.cwiseAbs2());
}

}  // namespace testing_helpers
