#pragma once

// Entropy-regularized matching equilibrium: find pi = exp((Phi - a - b) / sigma)
// with prescribed marginals by iterative projection fitting (Sinkhorn scaling).

#include <optional>
#include <utility>

#include "affinity/core.hpp"

namespace affinity {

struct IpfpConfig {
    double tol = 1e-10;  // sup-norm marginal violation, both sides
    int max_iter = 10000;
    bool log_domain = true;

    void validate() const;
};

struct IterationReport {
    int iterations = 0;
    double marginal_error = 0.0;
    int kernel_rebuilds = 0;  // log-domain absorptions of the scalings
};

struct IpfpResult {
    Coupling coupling;
    Potentials potentials;
    IterationReport report;
};

/// Phi(x_k, y_l) = x_k' A y_l over two supports.
Matrix quadratic_utility(const Matrix& a, const Matrix& x_support, const Matrix& y_support);

/// Solves the Schroedinger system for utility matrix `phi` (rows: p atoms,
/// cols: q atoms). `warm_start` potentials, when given, seed the iteration.
///
/// In log-domain mode the scalings a~ = exp(-a / sigma), b~ = exp(-b / sigma)
/// are periodically absorbed into the log-potentials, so exp(Phi / sigma)
/// never has to be representable. Zero-mass atoms get infinite potentials and
/// identically zero rows / columns.
///
/// Throws NotConverged when max_iter is reached above tol, and
/// NumericalOverflow in plain (non-log) mode when the kernel overflows.
IpfpResult solve_ipfp(const Matrix& phi, double sigma, const DiscreteMarginal& p,
                      const DiscreteMarginal& q, const IpfpConfig& cfg = {},
                      const Potentials* warm_start = nullptr);

/// One exact fixed-point sweep (row update, then column update) applied to
/// the given potentials, in log-domain.
Potentials ipfp_sweep(const Matrix& phi, double sigma, const DiscreteMarginal& p,
                      const DiscreteMarginal& q, const Potentials& current);

/// log pi(x, y) = (x' A y - a(x) - b(y)) / sigma at a support pair. Throws
/// SupportPointNotFound when either vector is not an atom of the coupling.
double log_likelihood_density(const Coupling& coupling, const AffinityModel& model,
                              const Potentials& potentials, const Vector& x,
                              const Vector& y);

/// Systematic utilities U = (Phi + a - b) / 2 and V = (Phi - a + b) / 2 over
/// the two supports; U + V = Phi.
std::pair<Matrix, Matrix> split_surplus(const AffinityModel& model, const Potentials& potentials,
                                        const DiscreteMarginal& p, const DiscreteMarginal& q);

/// Same split for an arbitrary utility matrix.
std::pair<Matrix, Matrix> split_surplus(const Matrix& phi, const Potentials& potentials);

}  // namespace affinity
