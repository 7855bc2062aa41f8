#include "renorm/expflow.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace renorm {

HSMatrix::HSMatrix(Matrix mat) : m(std::move(mat)) {
  if (m.rows() != m.cols() || m.rows() < 1) throw std::invalid_argument("HS matrix must be square");
  hs_norm = m.norm();
}

HSMatrix HSMatrix::normalized() const {
  if (hs_norm == 0.0) return *this;
  return HSMatrix(m / hs_norm);
}

HSMatrix HSMatrix::e11(int dim) {
  Matrix m = Matrix::Zero(dim, dim);
  m(0, 0) = 1.0;
  return HSMatrix(m);
}

HSMatrix HSMatrix::skew(int dim) {
  if (dim < 2) throw std::invalid_argument("skew matrix needs dim >= 2");
  Matrix m = Matrix::Zero(dim, dim);
  m(0, 1) = 1.0;
  m(1, 0) = -1.0;
  return HSMatrix(m);
}

HSMatrix HSMatrix::random_unit(int dim, std::uint64_t seed) {
  const CounterRng rng(seed, 5);
  Matrix m(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = rng.normal(static_cast<std::uint64_t>(i * dim + j));
  return HSMatrix(m).normalized();
}

Matrix expm(const Matrix& a) {
  static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                 1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                 670442572800.0,      33522128640.0,       1323241920.0,
                                 40840800.0,          960960.0,            16380.0,
                                 182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;
  const int n = static_cast<int>(a.rows());
  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const Matrix as = a / std::ldexp(1.0, squarings);
  const Matrix id = Matrix::Identity(n, n);
  const Matrix a2 = as * as, a4 = a2 * a2, a6 = a4 * a2;
  const Matrix u = as * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 +
                         b[1] * id);
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
  Matrix r = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < squarings; ++k) r = r * r;
  return r;
}

double cf_det(const Matrix& c) {
  const int n = static_cast<int>(c.rows());
  return (Matrix::Identity(n, n) + c).determinant() * std::exp(-c.trace());
}

double flow_div(const Matrix& c, const Point& x) { return (c * x).dot(x) - c.trace(); }

namespace {

void require_invertible(const Matrix& c) {
  const int n = static_cast<int>(c.rows());
  const Eigen::FullPivLU<Matrix> lu(Matrix::Identity(n, n) + c);
  if (!lu.isInvertible()) throw std::domain_error("I + C is singular");
}

}  // namespace

double pushforward_density(const Matrix& c, const Point& x) {
  require_invertible(c);
  const Vector cx = c * x;
  return std::exp(flow_div(c, x) + 0.5 * cx.squaredNorm()) / std::abs(cf_det(c));
}

double normalization_integrand(const Matrix& c, const Point& x) {
  const Vector cx = c * x;
  return std::abs(cf_det(c)) * std::exp(-flow_div(c, x) - 0.5 * cx.squaredNorm());
}

int calibrate_div_sign(double c, int order) {
  // Candidate sign s: div(cx) = s (c x^2 - c). The direct pushforward density
  // of x -> (1+c)x at (1+c)x is phi(x) / ((1+c) phi((1+c)x)); both candidates are
  // compared against it and against the normalization integral.
  const Rule1D& gh = gauss_hermite_rule(order);
  const double det2 = (1.0 + c) * std::exp(-c);
  int winner = 0;
  for (int s : {+1, -1}) {
    double integral = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) {
      const double x = gh.nodes[i];
      const double div = s * (c * x * x - c);
      integral += gh.weights[i] * std::abs(det2) * std::exp(-div - 0.5 * c * c * x * x);
      const double candidate = std::exp(div + 0.5 * c * c * x * x) / std::abs(det2);
      const double direct = normal_pdf(x) / ((1.0 + c) * normal_pdf((1.0 + c) * x));
      worst = std::max(worst, std::abs(candidate - direct) / direct);
    }
    if (std::abs(integral - 1.0) < 1e-10 && worst < 1e-10) winner = s;
  }
  return winner;
}

// ---------------------------------------------------------------------------

FlowSolution::FlowSolution(HSMatrix m, double t) : m_(std::move(m)), t_(t) {
  if (!(t >= 0.0)) throw std::invalid_argument("flow time must be nonnegative");
  const int n = m_.dim();
  if (t == 0.0) {
    exp_tm_ = exp_neg_tm_ = Matrix::Identity(n, n);
  } else {
    exp_tm_ = expm(t * m_.m);
    exp_neg_tm_ = expm(-t * m_.m);
  }
  e_ = exp_tm_ - Matrix::Identity(n, n);
  sigma_ = exp_tm_ * exp_tm_.transpose();
  // det(exp(tM)) = exp(t Tr M)
  log_det2_ = t * m_.m.trace() - e_.trace();
}

double FlowSolution::log_ut(const Point& y) const {
  const Vector x = exp_neg_tm_ * y;
  const Vector ex = e_ * x;
  return -log_det2_ + ex.dot(x) - e_.trace() + 0.5 * ex.squaredNorm();
}

double FlowSolution::ut(const Point& y) const { return std::exp(log_ut(y)); }

Vector FlowSolution::grad_log_ut(const Point& y) const {
  const Vector x = exp_neg_tm_ * y;
  const Vector inner = (e_ + e_.transpose()) * x + e_.transpose() * (e_ * x);
  return exp_neg_tm_.transpose() * inner;
}

Vector FlowSolution::grad_ut(const Point& y) const { return ut(y) * grad_log_ut(y); }

namespace {

/// int m(y) exp(l(y)) dgamma(y) computed as
/// E_z[m(Lz) exp(l(Lz) + log det L - |Lz|^2/2 + |z|^2/2)], y = Lz. Working with
/// the log keeps far quadrature nodes from overflowing.
Estimate expect_affine(const GaussianSpace& space, const Matrix& l, const ScalarFn& logw, const ScalarFn& mult) {
  const double logdet = l.diagonal().array().abs().log().sum();
  return expect(space.with_dim(static_cast<int>(l.rows())), [&](const Point& z) {
    const Point y = l * z;
    const double m = mult(y);
    if (m == 0.0) return 0.0;
    return m * std::exp(logw(y) + logdet - 0.5 * y.squaredNorm() + 0.5 * z.squaredNorm());
  });
}

}  // namespace

Estimate expect_against_ut(const FlowSolution& fs, const GaussianSpace& space, const ScalarFn& g) {
  const Matrix l = fs.sigma().llt().matrixL();
  return expect_affine(space, l, [&](const Point& y) { return fs.log_ut(y); }, g);
}

double lp_moment_closed_form(const FlowSolution& fs, double p) {
  const int n = fs.matrix().dim();
  const Matrix sinv = fs.sigma().inverse();
  const Matrix pp = p * sinv + (1.0 - p) * Matrix::Identity(n, n);
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (pp + pp.transpose()));
  if (es.eigenvalues().minCoeff() <= 0.0) return std::numeric_limits<double>::infinity();
  const double logdet_sigma = 2.0 * fs.t() * fs.matrix().m.trace();
  return std::exp(-0.5 * p * logdet_sigma - 0.5 * es.eigenvalues().array().log().sum());
}

LpReport lp_bound_check(const FlowSolution& fs, double p, const GaussianSpace& space) {
  if (!(p > 1.0)) throw std::invalid_argument("lp_bound_check needs p > 1");
  LpReport r;
  r.p = p;
  const int n = fs.matrix().dim();
  const Matrix id = Matrix::Identity(n, n);
  const Matrix sinv = fs.sigma().inverse();
  const Matrix q = 0.5 * p * (id - sinv);
  r.quadratic_coefficient =
      Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (q + q.transpose())).eigenvalues().maxCoeff();
  r.integrable = r.quadratic_coefficient < 0.5;
  if (!r.integrable) {
    r.message = "p too large for this (t, |M|)";
    return r;
  }
  const Matrix pp = p * sinv + (1.0 - p) * id;
  const Matrix l = pp.inverse().llt().matrixL();
  const ScalarFn logw = [&](const Point& y) { return p * fs.log_ut(y); };
  const Estimate mu = expect_affine(space, l, logw, [](const Point&) { return 1.0; });
  const Estimate mg =
      expect_affine(space, l, logw, [&](const Point& y) { return std::pow(fs.grad_log_ut(y).norm(), p); });
  r.norm_u = std::pow(mu.value, 1.0 / p);
  r.norm_grad = std::pow(mg.value, 1.0 / p);
  r.message = "ok";
  return r;
}

double select_p_excess(const FlowSolution& fs) {
  const double a = fs.t() * fs.matrix().hs_norm;
  const double denom = 1.0 + a * std::exp(a);
  double excess = 0.5 / (denom * denom);
  // (p/2)(1 - 1/lambda) < 1/2 with p = 1 + excess reads excess (lambda - 1) < 1,
  // which stays meaningful when 1 + excess rounds to 1
  const double lambda = Eigen::SelfAdjointEigenSolver<Matrix>(fs.sigma()).eigenvalues().maxCoeff();
  for (int k = 0; k < 200; ++k) {
    if (excess * (lambda - 1.0) < 1.0) return excess;
    excess *= 0.5;
  }
  throw std::runtime_error("no integrable p found");
}

double select_p(const FlowSolution& fs) { return 1.0 + select_p_excess(fs); }

double trace_remainder(const Matrix& m, double t) {
  const int n = static_cast<int>(m.rows());
  return (expm(t * m) - Matrix::Identity(n, n) - t * m).trace();
}

double weak_residual(const HSMatrix& m, double horizon, const TestFunction& psi,
                     const GaussianSpace& space, int time_nodes) {
  const Rule1D tr = gauss_legendre_rule(time_nodes, 0.0, horizon);
  const double w = std::numbers::pi / horizon;
  double acc = 0.0;
  for (std::size_t k = 0; k < tr.nodes.size(); ++k) {
    const double t = tr.nodes[k];
    const FlowSolution fs(m, t);
    const double chi = std::pow(std::sin(w * t), 2);
    const double dchi = w * std::sin(2.0 * w * t);
    const double a = expect_against_ut(fs, space, psi.value).value;
    const double b =
        expect_against_ut(fs, space, [&](const Point& y) { return psi.grad(y).dot(m.m * y); }).value;
    acc += tr.weights[k] * (dchi * a + chi * b);
  }
  return acc;
}

}  // namespace renorm
