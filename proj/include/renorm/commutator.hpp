#pragma once

// Commutator r^eps = div(b u^eps) - (T^eps)^* div(b u), u^eps = (T^eps)^* u,
// evaluated through the integration-by-parts kernels A_eps, B_eps (u is never
// differentiated), the error terms that vanish with eps, the anisotropic
// weight Lambda_rho and the renormalization-defect experiment.

#include "renorm/fields.hpp"
#include "renorm/mollifier.hpp"

#include <string>
#include <vector>

namespace renorm {

/// Raised when the field's distributional divergence has a singular part
/// (a jump with a normal component), so A_eps and B_eps are not integrable.
class NonIntegrableError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Throws NonIntegrableError when some interface carries a normal jump.
void require_integrable_divergence(const BVField& b, const GaussianSpace& space);

/// r^eps(t,x) = int u(t, x^eps) [B_eps - A_eps](x^eps, y^eps) dgamma(y).
double commutator_residual(const BVField& b, const TimeFn& u, const Mollifier& m, const OUParams& p, double t,
                           const Point& x, const GaussianSpace& space, Method method = Method::automatic);

/// ||div b||_{L^1(gamma)} (absolutely continuous part) and ||b||_{L^1(gamma)}.
double l1_divergence(const BVField& b, const GaussianSpace& space);
double l1_norm(const BVField& b, const GaussianSpace& space);

/// L^1(gamma x gamma) norm of e^{-eps} f(x_eps) - avg_0^eps f(x_s) e^{-s}.
Estimate ou_remainder(const ScalarFn& divb, const OUParams& p, const GaussianSpace& space);

/// Placement of |.| in the eps-dependent third term.
enum class AbsPlacement {
  inside,   // as displayed: avg_s int |...| dgamma(y)
  outside,  // alternative: int |avg_s ...| dgamma(y); plain kernels only
};

/// Lambda_rho at polar matrix M: int |div_y(My rho(y))| dgamma(y).
Estimate lambda_rho(const Mollifier& m, const Matrix& polar, const GaussianSpace& space);

/// int |phi| Lambda_rho d|Db| over the ac part and the jump parts.
/// The inner integrals carry |.| kinks; Gauss-Hermite converges only like 1/order
/// on them, so pass Method::monte_carlo when an unbiased value with an error bar is needed.
Estimate anisotropic_bound(const DerivativeMeasure& dm, const Mollifier& m, const TestFunction& phi,
                           const GaussianSpace& space, Method inner = Method::automatic);

/// The eps-dependent term int f_eps(x, Db/|Db|) d|Db| with
/// f_eps(x, M) = avg_0^eps int |phi|(x_{eps-s}) |e^{-s} div_y(My) rho(y^s) + <My, grad rho(y^s)>| dgamma(y).
Estimate third_term(const DerivativeMeasure& dm, const Mollifier& m, const TestFunction& phi, const OUParams& p,
                    const GaussianSpace& space, AbsPlacement placement = AbsPlacement::inside,
                    Method inner = Method::automatic);

/// sqrt(eps) |phi|_inf [ |b|_1 |grad rho|_inf + |div b|_1 |rho|_inf ]
double first_error(double eps, double phi_sup, double b_l1, double divb_l1, const Mollifier& m);
/// |phi|_inf |rho|_inf [ |R_eps div b|_1 + (eps / C_eps) |b|_1 ]
double second_error(const OUParams& p, double phi_sup, double b_l1, double remainder_l1, const Mollifier& m);

// ---------------------------------------------------------------------------
// Renormalization-defect experiment
// ---------------------------------------------------------------------------

struct DefectSetup {
  BVField b;
  TimeFn u;
  std::string u_name = "u";
  /// ||u||_inf; used to scale the bound chain and the pre-check threshold.
  double u_sup = 1.0;
  std::vector<RenormFunction> betas;
  std::vector<Mollifier> kernels;
  /// Kernels for which only the eps -> 0 anisotropic limit is evaluated.
  std::vector<Mollifier> limit_kernels;
  std::vector<double> eps_grid;
  std::vector<TestFunction> phis;
  /// Time quadrature for the (0,T) integrals; one node at t = 0 for stationary problems.
  std::vector<double> times{0.0};
  std::vector<double> time_weights{1.0};
  /// Horizon of the weak-residual pre-check.
  double horizon = 1.0;
  /// Refuse to run when u fails the pre-check; otherwise only report it.
  bool require_solution = true;
  /// Also evaluate the third term with |.| outside the s-average (plain kernels).
  bool abs_sensitivity = true;
  /// Inner rule for Lambda_rho and the third term; pass monte_carlo for unbiased values on |.| kinks.
  Method aniso_method = Method::automatic;
};

struct DefectRow {
  double eps = 0.0;
  std::string kernel;
  std::string phi;
  std::string beta;
  Estimate residual_pairing;
  Estimate aniso_bound;  // eps-dependent third term
  double aniso_alt = 0.0;  // NaN when not evaluated
  double first_error = 0.0;
  double second_error = 0.0;
  double rhs = 0.0;  // ||u|| sup|beta'| (aniso + errors)
  bool chain_pass = false;
};

struct KernelLimit {
  std::string kernel;
  std::string phi;
  Estimate aniso_limit;  // int |phi| Lambda_rho d|Db|, the eps -> 0 limit of the third term
  double error_limit = 0.0;
  double defect_limit = 0.0;
  double residual_limit = 0.0;  // extrapolated residual pairing (first beta)
  bool errors_finite = true;
};

struct DefectReport {
  std::vector<double> eps_grid;
  std::vector<DefectRow> rows;
  std::vector<KernelLimit> limits;
  /// min over kernels of the limiting bound, per the first phi
  double defect_limit = 0.0;
  double precheck_residual = 0.0;
  double precheck_threshold = 0.0;
  bool is_solution = false;
  bool chain_pass = false;
};

/// max over the phi battery of |int int (d_t phi) u + <grad phi, b> u dgamma dt|,
/// phi(t,x) = sin^2(pi t / horizon) psi(x).
double weak_solution_residual(const BVField& b, const TimeFn& u, const std::vector<TestFunction>& phis,
                              double horizon, const GaussianSpace& space, int time_nodes = 16);

/// Thrown when the pre-check fails and the setup requires a solution.
class NotASolutionError : public std::runtime_error {
 public:
  NotASolutionError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

DefectReport defect_experiment(const DefectSetup& setup, const GaussianSpace& space);

/// Richardson limit at eps -> 0: the polynomial in eps through the last (up to
/// four) points, evaluated at 0.
double extrapolate_to_zero(const std::vector<double>& eps, const std::vector<double>& values);

// ---------------------------------------------------------------------------
// Identities behind the integration by parts
// ---------------------------------------------------------------------------

struct IdentityReport {
  std::string name;
  int samples = 0;
  double max_residual = 0.0;
  bool pass = false;
};

/// div_y v(x_s, y_s) = sqrt(1 - e^{-2s}) [div_x v](x_s, y_s) + e^{-s} [div_y v](x_s, y_s),
/// Gaussian divergences, (x_s, y_s) the rotation by s.
IdentityReport gaussian_rotation_identity(int dim, int samples, std::uint64_t seed, double tol = 1e-6);
/// div_y v(x - s y, y) = -s [div_x v](x - s y, y) + [div_y v](x - s y, y), Euclidean divergences.
IdentityReport euclidean_shear_identity(int dim, int samples, std::uint64_t seed, double tol = 1e-6);
/// d/ds x_s = y_s / C_s by central differences.
IdentityReport ou_path_derivative(int dim, int samples, std::uint64_t seed, double tol = 1e-6);

}  // namespace renorm
