#pragma once

// Mollifier optimization. The objective is
//   J(rho, M) = int |div_y(My rho(y))| dgamma(y)   (gaussian mode)
//   J(rho, M) = int |div_y(My rho(y))| dy          (lebesgue mode)
// and the explicit near-minimizer is the flow average rho_T = (1/T) int_0^T u_t dt
// of the continuity equation driven by y -> My, for which J <= 2/T.

#include "renorm/expflow.hpp"
#include "renorm/mollifier.hpp"

#include <vector>

namespace renorm {

struct AveragedKernel {
  HSMatrix matrix;
  double horizon = 0.0;
  KernelMode mode = KernelMode::gaussian;
  /// Composite Gauss-Legendre nodes on (0, T); weights sum to T.
  std::vector<double> time_nodes;
  std::vector<double> time_weights;
  /// p - 1 for an exponent p > 1 with rho_T in W^{1,p}(gamma) (gaussian mode).
  double p_excess = 0.0;
  Mollifier kernel;
};

/// Time nodes giving panels of width at most 1/(2|M|) (8 nodes per panel).
int default_time_nodes(const HSMatrix& m, double horizon);

/// Gaussian mode, u_0 = 1: rho_T(y) = (1/T) sum_k w_k u_{t_k}(y).
/// `nodes` <= 0 picks default_time_nodes. Throws std::domain_error naming
/// (t, p) when the integrability check fails at a node.
AveragedKernel averaged_kernel(const HSMatrix& m, double horizon, int nodes, const GaussianSpace& space);

/// Lebesgue mode: u_0 the unit bump, transported along the exact linear
/// characteristics, u_t(y) = e^{-t Tr M} u_0(e^{-tM} y).
AveragedKernel averaged_kernel_lebesgue(const HSMatrix& m, double horizon, int nodes = 0);

/// J(rho, M). Throws std::invalid_argument for kernels that fail validation.
Estimate objective(const Mollifier& rho, const HSMatrix& m, const GaussianSpace& space,
                   Method method = Method::automatic);
/// Same, skipping validation (callers that already validated the kernel).
Estimate objective_unchecked(const Mollifier& rho, const HSMatrix& m, const GaussianSpace& space,
                             Method method = Method::automatic);

struct BoundRow {
  double horizon = 0.0;
  double J = 0.0;
  double bound = 0.0;  // 2/T
  double std_error = 0.0;
  bool pass = false;
};

struct BoundReport {
  HSMatrix matrix;     // normalized
  double scale = 0.0;  // HS norm of the matrix as given
  std::vector<BoundRow> rows;
  bool pass = false;
  /// J nonincreasing in T within 4 combined standard errors
  bool monotone = false;
};

/// J(rho_T, M/|M|) against 2/T for each T; Monte Carlo at the space's budget.
BoundReport verify_bound(const HSMatrix& m, const std::vector<double>& horizons, const GaussianSpace& space,
                         KernelMode mode = KernelMode::gaussian, Method method = Method::monte_carlo);

}  // namespace renorm
