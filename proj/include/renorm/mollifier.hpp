#pragma once

// Kernels rho and the two mollification operators: Lebesgue convolution and
// the Gaussian rotation operator
//   T^eps_rho f(x) = int f(e^{-eps} x + sqrt(1 - e^{-2 eps}) y) rho(y) dgamma(y)
// with its adjoint.

#include "renorm/gauss_core.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace renorm {

enum class KernelMode { gaussian, lebesgue };

struct Mollifier {
  std::string name;
  KernelMode mode = KernelMode::gaussian;
  int dim = 1;
  std::function<double(const Point&)> rho;
  std::function<Vector(const Point&)> grad_rho;
  double support_radius = std::numeric_limits<double>::infinity();
  /// Upper bounds for |rho| and |grad rho|; infinity when unknown.
  double sup_rho = std::numeric_limits<double>::infinity();
  double sup_grad = std::numeric_limits<double>::infinity();
  bool identically_one = false;
  /// Optional rule for the probability measure rho dgamma (rho dy in lebesgue
  /// mode). Kernels spread far beyond the bulk of gamma set this together with
  /// `score`, the gradient of the log density of that measure; integrals are
  /// then taken by sampling the measure. Using the score directly avoids the
  /// cancellation in grad log rho - y far out in the tails.
  std::function<std::shared_ptr<const PointRule>(const GaussianSpace&, Method)> measure_rule;
  std::function<Vector(const Point&)> score;
  /// Exact or high-accuracy mass when plain quadrature is unsuitable.
  std::function<Estimate(const GaussianSpace&)> mass_override;
  /// Optional decomposition rho = sum_k w_k rho_k. Integrals linear in rho are
  /// taken component by component, each with its own (much cheaper) rule.
  std::vector<Mollifier> components;
  std::vector<double> component_weights;
};

Mollifier unit_kernel(int dim);
/// rho = p^2 / E[p^2] with p(y) = c0 + sum_i lin_i y_i + sum_i quad_i (y_i^2 - 1).
Mollifier hermite_square_kernel(double c0, const Vector& lin, const Vector& quad);
/// Standard bump exp(-1/(1-|y|^2)) on the unit ball, unit Lebesgue mass.
Mollifier lebesgue_bump(int dim);
/// Kernel from an expression in y1..yN written as x1..xN; normalized by quadrature
/// only if `normalize` is set.
Mollifier expression_kernel(const std::string& expr, int dim, KernelMode mode, bool normalize);

/// Tensor composite Gauss-Legendre rule on [-radius, radius]^dim, Lebesgue weights,
/// 8-point panels.
PointRule box_rule(int dim, double radius, int nodes_per_axis);

/// Mass: gamma-mass in gaussian mode, Lebesgue mass otherwise.
Estimate kernel_mass(const Mollifier& m, const GaussianSpace& space);

struct KernelReport {
  bool pass = false;
  bool nonnegative = false;
  bool unit_mass = false;
  bool gradient_ok = false;
  double min_rho = 0.0;
  double mass_error = 0.0;
  double grad_error = 0.0;
  std::string failure;
};

KernelReport validate_kernel(const Mollifier& m, const GaussianSpace& space, double mass_tol = 1e-8);

/// Throws std::invalid_argument when validation fails.
void require_valid_kernel(const Mollifier& m, const GaussianSpace& space, double mass_tol = 1e-8);

/// g(y, rho, D rho) with D rho(w) = grad rho(w) - w rho(w), the gradient that
/// appears in Gaussian divergences: div_gamma(v rho) = rho div_gamma v + <v, grad rho>
/// and <v, grad rho> - <v, w> rho = <v, D rho>. g must be positively homogeneous
/// of degree one in (rho, D rho).
using KernelIntegrand = std::function<double(const Point& y, double rho, const Vector& d_rho)>;

/// int g(y, rho(w), D rho(w)) dgamma(y) with w = shift + a y, 0 < a <= 1.
/// Kernels with a measure rule are integrated by sampling w from rho dgamma and
/// reweighting with the Gaussian density ratio of the substitution.
Estimate kernel_integral(const Mollifier& m, const Point& shift, double a, const GaussianSpace& space,
                         const KernelIntegrand& g, Method method = Method::automatic);
/// Same for g linear in (rho, D rho): uses the kernel's components when present.
Estimate kernel_integral_linear(const Mollifier& m, const Point& shift, double a, const GaussianSpace& space,
                                const KernelIntegrand& g, Method method = Method::automatic);

// ---------------------------------------------------------------------------

struct OUParams {
  double eps = 0.0;
  double a = 1.0;   // e^{-eps}
  double s = 0.0;   // sqrt(1 - e^{-2 eps})
  double C = 0.0;   // s / a = e^{eps} sqrt(1 - e^{-2 eps})

  explicit OUParams(double eps);

  Point x_eps(const Point& x, const Point& y) const { return a * x + s * y; }
  Point y_eps(const Point& x, const Point& y) const { return -s * x + a * y; }
  Point x_adj(const Point& x, const Point& y) const { return a * x - s * y; }
  Point y_adj(const Point& x, const Point& y) const { return s * x + a * y; }
};

/// C_s for s > 0.
double ou_c(double s);

/// (1/C_eps) int_0^eps f(s) / C_s ds, with s = r^2 and 8-point Gauss-Legendre in r.
double s_average(double eps, const std::function<double(double)>& f, int order = 8);
/// Nodes and weights of the s-average rule: sum w_k f(s_k).
Rule1D s_average_rule(double eps, int order = 8);

/// Geometric grid start, start/2, ... down to >= stop (factor 1/2).
std::vector<double> geometric_grid(double start, double stop);

using TimeFn = std::function<double(double, const Point&)>;

double apply_teps(const Mollifier& m, const OUParams& p, const TimeFn& f, double t, const Point& x,
                  const GaussianSpace& space);
double apply_teps_adjoint(const Mollifier& m, const OUParams& p, const TimeFn& f, double t,
                          const Point& x, const GaussianSpace& space);
/// Lebesgue convolution int f(x - eps y) rho(y) dy over the kernel support,
/// tensor composite Gauss-Legendre (nodes_per_axis <= 0 picks a size by dimension).
double apply_conv(const Mollifier& m, double eps, const TimeFn& f, double t, const Point& x,
                  int nodes_per_axis = 0);

}  // namespace renorm
