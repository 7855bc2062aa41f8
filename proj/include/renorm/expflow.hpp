#pragma once

// Exact solutions of the continuity equation driven by the linear field y -> My:
// the exponential flow X(t,x) = exp(tM)x, the Carleman-Fredholm determinant and
// the Gaussian change-of-variables density u_t = d X(t,.)_# gamma / d gamma.
//
// Convention for div(Cx) in the change-of-variables formulas: <Cx, x> - Tr C.
// This is the choice for which the normalization integral equals 1 (see
// calibrate_div_sign), i.e. the negative of the Gaussian divergence.

#include "renorm/gauss_core.hpp"

#include <string>

namespace renorm {

struct HSMatrix {
  Matrix m;
  double hs_norm = 0.0;

  HSMatrix() = default;
  explicit HSMatrix(Matrix mat);
  int dim() const { return static_cast<int>(m.rows()); }
  HSMatrix normalized() const;

  static HSMatrix e11(int dim);
  static HSMatrix skew(int dim);  // e1 (x) e2 - e2 (x) e1
  /// Random matrix with i.i.d. normal entries, HS norm 1.
  static HSMatrix random_unit(int dim, std::uint64_t seed);
};

/// Scaling-and-squaring with the degree-13 Pade approximant.
Matrix expm(const Matrix& a);

/// det(I+C) exp(-Tr C)
double cf_det(const Matrix& c);

/// div(Cx) in the convention above: <Cx,x> - Tr C.
double flow_div(const Matrix& c, const Point& x);

/// Density of (I+C)_# gamma with respect to gamma, evaluated at (I+C)x:
/// |det2(I+C)|^{-1} exp(div(Cx) + |Cx|^2/2).
double pushforward_density(const Matrix& c, const Point& x);

/// Integrand of the normalization identity:
/// |det2(I+C)| exp(-div(Cx) - |Cx|^2/2).
double normalization_integrand(const Matrix& c, const Point& x);

/// Runs the 1D direct-pushforward oracle with C = c and returns +1 if
/// div(Cx) = <Cx,x> - Tr C makes the normalization integral equal to 1,
/// -1 if the opposite sign does, 0 if neither.
int calibrate_div_sign(double c = 0.3, int order = 40);

class FlowSolution {
 public:
  FlowSolution(HSMatrix m, double t);

  const HSMatrix& matrix() const { return m_; }
  double t() const { return t_; }
  const Matrix& exp_tm() const { return exp_tm_; }
  const Matrix& exp_neg_tm() const { return exp_neg_tm_; }
  double det2() const { return std::exp(log_det2_); }
  double log_det2() const { return log_det2_; }
  /// Covariance of the transported measure: exp(tM) exp(tM)^T.
  const Matrix& sigma() const { return sigma_; }

  Point flow_map(const Point& x) const { return exp_tm_ * x; }
  double ut(const Point& y) const;
  double log_ut(const Point& y) const;
  Vector grad_ut(const Point& y) const;
  /// grad u_t / u_t
  Vector grad_log_ut(const Point& y) const;

 private:
  HSMatrix m_;
  double t_;
  Matrix exp_tm_, exp_neg_tm_, e_, sigma_;
  double log_det2_;
};

/// int g u_t dgamma, by quadrature on the Cholesky image of the transported Gaussian.
Estimate expect_against_ut(const FlowSolution& fs, const GaussianSpace& space, const ScalarFn& g);

/// Closed form of int u_t^p dgamma when finite: det(Sigma)^{-p/2} det(P_p)^{-1/2},
/// P_p = p Sigma^{-1} + (1-p) I. Returns +inf when P_p is not positive definite.
double lp_moment_closed_form(const FlowSolution& fs, double p);

struct LpReport {
  double p = 1.0;
  bool integrable = false;
  /// max eigenvalue of (p/2)(I - Sigma^{-1}); integrable iff < 1/2
  double quadratic_coefficient = 0.0;
  double norm_u = 0.0;       // ||u_t||_p
  double norm_grad = 0.0;    // || |grad u_t| ||_p
  std::string message;
};

LpReport lp_bound_check(const FlowSolution& fs, double p, const GaussianSpace& space);
/// Starts at 1 + 0.5/(1 + t|M| e^{t|M|})^2 and halves p - 1 until integrable.
double select_p(const FlowSolution& fs);
/// p - 1 for the same rule; at large t|M| it is far below the spacing of doubles near 1.
double select_p_excess(const FlowSolution& fs);

/// Tr[exp(tM) - I - tM], the remainder controlled by t^2 |M|^2 e^{t|M|}.
double trace_remainder(const Matrix& m, double t);

/// Weak continuity-equation residual on [0,T] with phi(t,x) = sin^2(pi t/T) psi(x):
/// int int (d_t phi) u_t + <grad phi, My> u_t dgamma dt.
double weak_residual(const HSMatrix& m, double horizon, const TestFunction& psi,
                     const GaussianSpace& space, int time_nodes = 16);

}  // namespace renorm
