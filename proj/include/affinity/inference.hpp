#pragma once

// Asymptotic covariance of the fitted affinity and of the rescaled matrix
// Theta, and the chi-square test for the rank of Theta.

#include "affinity/core.hpp"
#include "affinity/welfare.hpp"

namespace affinity {

enum class FourthMomentSource {
    empirical,  // observed couples
    model,      // fitted equilibrium coupling (only the x-y block differs)
};

struct CovarianceConfig {
    FourthMomentSource fourth_moments = FourthMomentSource::empirical;
    CenteringConfig centering;
};

/// All operators act on row-major vectorized matrices. The sensitivity of
/// Theta = S_X^{1/2} B S_Y^{1/2} is dTheta = T_XY dB + T_X dS_X + T_Y dS_Y.
struct AsymptoticCovariance {
    DoublyIndexedMatrix fisher;
    DoublyIndexedMatrix f_inv;  // asymptotic covariance of sqrt(n) (B-hat - B)
    DoublyIndexedMatrix k_xx;   // (i, j), (k, l): 1{i = j} 1{k = l} cov(X_i^2, X_k^2)
    DoublyIndexedMatrix k_xy;   // 1{i = j} 1{k = l} cov(X_i^2, Y_k^2)
    DoublyIndexedMatrix k_yy;
    DoublyIndexedMatrix t_xy;
    DoublyIndexedMatrix t_x;
    DoublyIndexedMatrix t_y;
    DoublyIndexedMatrix v_theta;  // asymptotic covariance of sqrt(n) (Theta-hat - Theta)
    Matrix theta;
    Vector s_x;
    Vector s_y;
    double min_fisher_eigenvalue = 0.0;
    Index n = 0;

    /// Standard errors of the entries of B-hat: sqrt(diag(F^{-1}) / n).
    Matrix b_standard_errors() const;
};

/// Covariance at the fitted B (unit heterogeneity). `coupling` is the fitted
/// equilibrium; `fisher` may be passed when already available. Throws
/// SingularFisher when F is not positive definite.
AsymptoticCovariance asymptotic_covariance(const MatchedSample& sample, const Matrix& b,
                                           const Coupling& coupling,
                                           const CovarianceConfig& cfg = {},
                                           const DoublyIndexedMatrix* fisher = nullptr);

/// Overload taking the normalized model; B = A / sigma is used.
AsymptoticCovariance asymptotic_covariance(const MatchedSample& sample, const AffinityModel& model,
                                           const Coupling& coupling,
                                           const CovarianceConfig& cfg = {});

struct RankTestResult {
    Index p = 0;
    double statistic = 0.0;
    Index df = 0;
    double p_value = 1.0;
    Matrix t_matrix;  // (d_x - p) x (d_y - p)
    Vector t_vec;     // row-major vectorization of t_matrix
    Matrix omega;
    Index omega_rank = 0;
    bool degenerate = false;  // Omega singular; pseudo-inverse used
};

/// H0: rank(Theta) = p, for 1 <= p < min(d_x, d_y). Throws SingularCornerBlock
/// when a lower-right block of the singular vectors is singular.
RankTestResult rank_test(const Matrix& theta_hat, const DoublyIndexedMatrix& v_theta, Index n,
                         Index p);

/// Smallest p whose test does not reject at `alpha`; min(d_x, d_y) when all do.
Index sorting_dimension(const Matrix& theta_hat, const DoublyIndexedMatrix& v_theta, Index n,
                        double alpha);
Index sorting_dimension(const AsymptoticCovariance& cov, double alpha);
Index sorting_dimension(const MatchedSample& sample, const AffinityModel& model,
                        const Coupling& coupling, double alpha);

}  // namespace affinity
