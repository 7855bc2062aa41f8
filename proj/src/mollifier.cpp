#include "renorm/mollifier.hpp"

#include "renorm/expression.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace renorm {

Mollifier unit_kernel(int dim) {
  Mollifier m;
  m.name = "one";
  m.dim = dim;
  m.rho = [](const Point&) { return 1.0; };
  m.grad_rho = [dim](const Point&) { return Vector::Zero(dim).eval(); };
  m.sup_rho = 1.0;
  m.sup_grad = 0.0;
  m.identically_one = true;
  return m;
}

Mollifier hermite_square_kernel(double c0, const Vector& lin, const Vector& quad) {
  if (lin.size() != quad.size() || lin.size() < 1)
    throw std::invalid_argument("hermite kernel: coefficient vectors must share a positive length");
  const double z = c0 * c0 + lin.squaredNorm() + 2.0 * quad.squaredNorm();
  if (!(z > 0.0)) throw std::invalid_argument("hermite kernel: zero polynomial");
  Mollifier m;
  m.name = "hermite2";
  m.dim = static_cast<int>(lin.size());
  auto p = [=](const Point& y) {
    return c0 + lin.dot(y) + (quad.array() * (y.array().square() - 1.0)).sum();
  };
  auto dp = [=](const Point& y) { return (lin.array() + 2.0 * quad.array() * y.array()).matrix().eval(); };
  m.rho = [=](const Point& y) {
    const double v = p(y);
    return v * v / z;
  };
  m.grad_rho = [=](const Point& y) { return (2.0 * p(y) / z * dp(y)).eval(); };
  return m;
}

namespace {

double unit_sphere_area(int d) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

double bump_profile(double r2) { return r2 < 1.0 ? std::exp(-1.0 / (1.0 - r2)) : 0.0; }

}  // namespace

PointRule box_rule(int dim, double radius, int nodes_per_axis) {
  const int panels = std::max(1, nodes_per_axis / 8);
  const Rule1D r = composite_gauss_legendre(-radius, radius, panels, 8);
  const std::size_t n1 = r.nodes.size();
  std::size_t total = 1;
  for (int k = 0; k < dim; ++k) total *= n1;
  PointRule rule;
  rule.points.reserve(total);
  rule.weights.reserve(total);
  std::vector<std::size_t> idx(dim, 0);
  for (std::size_t c = 0; c < total; ++c) {
    Point y(dim);
    double w = 1.0;
    for (int k = 0; k < dim; ++k) {
      y[k] = r.nodes[idx[k]];
      w *= r.weights[idx[k]];
    }
    rule.points.push_back(std::move(y));
    rule.weights.push_back(w);
    for (int k = 0; k < dim; ++k) {
      if (++idx[k] < n1) break;
      idx[k] = 0;
    }
  }
  return rule;
}

namespace {

int box_nodes_for(int dim) {
  const int n = static_cast<int>(std::pow(4.0e6, 1.0 / dim));
  return std::clamp(n - n % 8, 8, 2048);
}

}  // namespace

Mollifier lebesgue_bump(int dim) {
  if (dim < 1) throw std::invalid_argument("bump dimension must be positive");
  const Rule1D r = composite_gauss_legendre(0.0, 1.0, 400, 8);
  double radial = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i)
    radial += r.weights[i] * std::pow(r.nodes[i], dim - 1) * bump_profile(r.nodes[i] * r.nodes[i]);
  const double z = unit_sphere_area(dim) * radial;
  Mollifier m;
  m.name = "bump";
  m.mode = KernelMode::lebesgue;
  m.dim = dim;
  m.support_radius = 1.0;
  m.rho = [z](const Point& y) { return bump_profile(y.squaredNorm()) / z; };
  m.grad_rho = [z, dim](const Point& y) {
    const double r2 = y.squaredNorm();
    if (r2 >= 1.0) return Vector::Zero(dim).eval();
    const double q = 1.0 - r2;
    return (bump_profile(r2) / z * (-2.0 / (q * q)) * y).eval();
  };
  m.sup_rho = bump_profile(0.0) / z;
  return m;
}

Mollifier expression_kernel(const std::string& expr, int dim, KernelMode mode, bool normalize) {
  const Expression e = Expression::parse(expr, dim);
  Mollifier m;
  m.name = "expr";
  m.mode = mode;
  m.dim = dim;
  if (mode == KernelMode::lebesgue) {
    // lebesgue expression kernels are cut off outside the unit ball
    m.support_radius = 1.0;
    m.rho = [e](const Point& y) { return y.squaredNorm() < 1.0 ? e.eval(y) : 0.0; };
    m.grad_rho = [e, dim](const Point& y) {
      Vector g = Vector::Zero(dim);
      if (y.squaredNorm() < 1.0) e.eval_grad(y, g);
      return g;
    };
  } else {
    m.rho = [e](const Point& y) { return e.eval(y); };
    m.grad_rho = [e](const Point& y) {
      Vector g;
      e.eval_grad(y, g);
      return g;
    };
  }
  if (normalize) {
    const double z = kernel_mass(m, GaussianSpace(dim)).value;
    if (!(std::abs(z) > 0.0)) throw std::invalid_argument("expression kernel has zero mass");
    auto rho = m.rho;
    auto grad = m.grad_rho;
    m.rho = [rho, z](const Point& y) { return rho(y) / z; };
    m.grad_rho = [grad, z](const Point& y) { return (grad(y) / z).eval(); };
  }
  return m;
}

Estimate kernel_mass(const Mollifier& m, const GaussianSpace& space) {
  if (m.mass_override) return m.mass_override(space.with_dim(m.dim));
  if (m.measure_rule) throw std::invalid_argument("kernel with a measure rule needs a mass override");
  if (m.mode == KernelMode::gaussian) return expect(space.with_dim(m.dim), m.rho);
  if (!std::isfinite(m.support_radius)) throw std::invalid_argument("lebesgue kernel needs a finite support");
  return expect_rule(box_rule(m.dim, m.support_radius, box_nodes_for(m.dim)), m.rho);
}

KernelReport validate_kernel(const Mollifier& m, const GaussianSpace& space, double mass_tol) {
  KernelReport r;
  const GaussianSpace sp = space.with_dim(m.dim);
  const int count = 10000;
  std::vector<Point> pts;
  if (m.mode == KernelMode::gaussian) {
    pts = sample_gaussian(sp, count, 77);
  } else {
    const CounterRng rng(sp.seed(), 78);
    const double radius = std::isfinite(m.support_radius) ? m.support_radius : 1.0;
    for (int i = 0; i < count; ++i) {
      Point y(m.dim);
      for (int k = 0; k < m.dim; ++k)
        y[k] = radius * (2.0 * rng.uniform(static_cast<std::uint64_t>(i) * m.dim + k) - 1.0);
      pts.push_back(std::move(y));
    }
  }
  r.min_rho = std::numeric_limits<double>::infinity();
  for (const auto& y : pts) r.min_rho = std::min(r.min_rho, m.rho(y));
  r.nonnegative = r.min_rho >= 0.0;

  const Estimate mass = kernel_mass(m, sp);
  r.mass_error = std::abs(mass.value - 1.0);
  r.unit_mass = r.mass_error < mass_tol + 4.0 * mass.std_error;

  const double h = 1e-5;
  r.grad_error = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Point& y = pts[i * (count / 20)];
    const Vector g = m.grad_rho(y);
    Vector fd(m.dim);
    for (int k = 0; k < m.dim; ++k) {
      Point yp = y, ym = y;
      yp[k] += h;
      ym[k] -= h;
      fd[k] = (m.rho(yp) - m.rho(ym)) / (2 * h);
    }
    const double scale = std::max({1.0, std::abs(m.rho(y)), g.cwiseAbs().maxCoeff()});
    r.grad_error = std::max(r.grad_error, (g - fd).cwiseAbs().maxCoeff() / scale);
  }
  r.gradient_ok = r.grad_error < 1e-5;

  r.pass = r.nonnegative && r.unit_mass && r.gradient_ok;
  if (!r.nonnegative) r.failure = "kernel takes negative values (min " + std::to_string(r.min_rho) + ")";
  else if (!r.unit_mass) r.failure = "kernel mass is off by " + std::to_string(r.mass_error);
  else if (!r.gradient_ok) r.failure = "gradient mismatch " + std::to_string(r.grad_error);
  return r;
}

void require_valid_kernel(const Mollifier& m, const GaussianSpace& space, double mass_tol) {
  const KernelReport r = validate_kernel(m, space, mass_tol);
  if (!r.pass) throw std::invalid_argument("kernel '" + m.name + "' failed validation: " + r.failure);
}

Estimate kernel_integral(const Mollifier& m, const Point& shift, double a, const GaussianSpace& space,
                         const KernelIntegrand& g, Method method) {
  if (m.mode != KernelMode::gaussian) throw std::invalid_argument("kernel_integral needs a gaussian-mode kernel");
  if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("kernel_integral: a must lie in (0, 1]");
  const GaussianSpace sp = space.with_dim(m.dim);
  if (!m.measure_rule) {
    return expect(sp, [&](const Point& y) {
      const Point w = shift + a * y;
      const double r = m.rho(w);
      return g(y, r, (m.grad_rho(w) - r * w).eval());
    }, method);
  }
  // y = (w - shift)/a, dgamma(y) = gamma(y) a^{-N} dw = ratio(w) gamma(w) dw
  const double log_a = std::log(a);
  return expect_rule(*m.measure_rule(sp, method), [&](const Point& w) {
    const Point y = (w - shift) / a;
    const double log_ratio = 0.5 * (w.squaredNorm() - y.squaredNorm()) - m.dim * log_a;
    const double ratio = std::exp(log_ratio);
    if (ratio == 0.0) return 0.0;
    return g(y, 1.0, m.score(w)) * ratio;
  });
}

Estimate kernel_integral_linear(const Mollifier& m, const Point& shift, double a, const GaussianSpace& space,
                                const KernelIntegrand& g, Method method) {
  if (m.components.empty()) return kernel_integral(m, shift, a, space, g, method);
  if (m.components.size() != m.component_weights.size())
    throw std::logic_error("kernel components and weights differ in length");
  Estimate total{0.0, 0.0, Method::quadrature};
  for (std::size_t k = 0; k < m.components.size(); ++k) {
    const Estimate e = kernel_integral(m.components[k], shift, a, space, g, method);
    total.value += m.component_weights[k] * e.value;
    // components share their random draws, so errors add linearly
    total.std_error += m.component_weights[k] * e.std_error;
    if (e.method == Method::monte_carlo) total.method = Method::monte_carlo;
  }
  return total;
}

// ---------------------------------------------------------------------------

double ou_c(double s) { return std::exp(s) * std::sqrt(-std::expm1(-2.0 * s)); }

OUParams::OUParams(double e) : eps(e) {
  if (!(e > 0.0)) throw std::invalid_argument("eps must be positive");
  a = std::exp(-e);
  s = std::sqrt(-std::expm1(-2.0 * e));
  C = s / a;
}

Rule1D s_average_rule(double eps, int order) {
  const Rule1D g = gauss_legendre_rule(order, 0.0, std::sqrt(eps));
  const double ce = ou_c(eps);
  Rule1D out;
  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    const double r = g.nodes[k];
    const double s = r * r;
    out.nodes.push_back(s);
    out.weights.push_back(g.weights[k] * 2.0 * r / ou_c(s) / ce);
  }
  return out;
}

double s_average(double eps, const std::function<double(double)>& f, int order) {
  const Rule1D r = s_average_rule(eps, order);
  double acc = 0.0;
  for (std::size_t k = 0; k < r.nodes.size(); ++k) acc += r.weights[k] * f(r.nodes[k]);
  return acc;
}

std::vector<double> geometric_grid(double start, double stop) {
  if (!(start > 0.0) || !(stop > 0.0) || stop > start) throw std::invalid_argument("bad geometric grid");
  std::vector<double> out;
  for (double v = start; v >= stop * (1.0 - 1e-9); v *= 0.5) out.push_back(v);
  return out;
}

double apply_teps(const Mollifier& m, const OUParams& p, const TimeFn& f, double t, const Point& x,
                  const GaussianSpace& space) {
  if (m.mode != KernelMode::gaussian) throw std::invalid_argument("apply_teps needs a gaussian-mode kernel");
  const GaussianSpace sp = space.with_dim(m.dim);
  if (m.measure_rule)
    return expect_rule(*m.measure_rule(sp, Method::automatic), [&](const Point& y) { return f(t, p.x_eps(x, y)); })
        .value;
  return expect(sp, [&](const Point& y) { return f(t, p.x_eps(x, y)) * m.rho(y); }).value;
}

double apply_teps_adjoint(const Mollifier& m, const OUParams& p, const TimeFn& f, double t,
                          const Point& x, const GaussianSpace& space) {
  if (m.mode != KernelMode::gaussian) throw std::invalid_argument("apply_teps needs a gaussian-mode kernel");
  // y^eps = s x + a y
  return kernel_integral_linear(m, p.s * x, p.a, space,
                                [&](const Point& y, double rho, const Vector&) { return f(t, p.x_adj(x, y)) * rho; })
      .value;
}

double apply_conv(const Mollifier& m, double eps, const TimeFn& f, double t, const Point& x,
                  int nodes_per_axis) {
  if (m.mode != KernelMode::lebesgue || !std::isfinite(m.support_radius))
    throw std::invalid_argument("apply_conv needs a compactly supported lebesgue kernel");
  if (nodes_per_axis <= 0) nodes_per_axis = m.dim == 1 ? 1024 : (m.dim == 2 ? 128 : 48);
  const PointRule rule = box_rule(m.dim, m.support_radius, nodes_per_axis);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const Point& y = rule.points[i];
    const double r = m.rho(y);
    if (r != 0.0) acc += rule.weights[i] * f(t, x - eps * y) * r;
  }
  return acc;
}

}  // namespace renorm
