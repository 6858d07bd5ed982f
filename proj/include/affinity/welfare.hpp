#pragma once

// Social gain W(B) at unit heterogeneity, its gradient (model-predicted cross
// moments) and its Hessian (Fisher information).

#include "affinity/core.hpp"
#include "affinity/schrodinger.hpp"

namespace affinity {

struct WelfareEvaluation {
    double value = 0.0;  // W_1(B) = E_pi[X'BY] - E_pi[log pi]
    Matrix gradient;     // E_pi[X Y']
    Coupling coupling;
    Potentials potentials;
    IterationReport report;
};

/// Solves the equilibrium for Phi = x'By at sigma = 1 and evaluates W_1.
/// The entropy uses counting measure on the support grid.
WelfareEvaluation evaluate_welfare(const Matrix& b, const DiscreteMarginal& p,
                                   const DiscreteMarginal& q, const IpfpConfig& cfg = {},
                                   const Potentials* warm_start = nullptr);

/// E_pi[Phi] - sigma E_pi[log pi] for any coupling (0 log 0 = 0).
double social_gain(const Coupling& coupling, const Matrix& phi, double sigma);

enum class CenteringMethod {
    conjugate_gradient,  // Krylov-accelerated centering on the reduced system
    alternating,         // plain alternating conditional-mean sweeps
};

struct CenteringConfig {
    double tol = 1e-10;  // sup-norm of the conditional means of D under pi
    int max_iter = 10000;
    CenteringMethod method = CenteringMethod::conjugate_gradient;
};

/// Doubly-centered scores D_ij(x, y) = x_i y_j - alpha_ij(x) - beta_ij(y).
/// Column (i * d_y + j) of `alpha` / `beta` holds alpha_ij / beta_ij over the
/// row / column support.
struct ScoreFunctions {
    Matrix alpha;
    Matrix beta;
    Index dim_x = 0;
    Index dim_y = 0;
    int iterations = 0;
    double residual = 0.0;  // largest |E[D_ij | X]| or |E[D_ij | Y]|

    /// D_ij as a matrix over the support grid.
    Matrix evaluate(const Coupling& coupling, Index i, Index j) const;
};

ScoreFunctions score_functions(const Coupling& coupling, const CenteringConfig& cfg = {});
/// Same, starting the iteration from `initial_beta` (e.g. the solution for a
/// nearby coupling); must be support_y x (d_x * d_y).
ScoreFunctions score_functions(const Coupling& coupling, const CenteringConfig& cfg,
                               const Matrix& initial_beta);

/// Reference solution of the centering equations by a dense minimum-norm
/// solve, for small supports.
ScoreFunctions score_functions_dense(const Coupling& coupling);

/// F^{ij}_{kl} = E_pi[D_ij X_k Y_l].
DoublyIndexedMatrix fisher_information(const Coupling& coupling, const ScoreFunctions& scores);
DoublyIndexedMatrix fisher_information(const Coupling& coupling, const CenteringConfig& cfg = {});

}  // namespace affinity
