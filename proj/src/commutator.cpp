#include "renorm/commutator.hpp"

#include "renorm/expflow.hpp"
#include "renorm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>

namespace renorm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// c * bound, with 0 * inf = 0
double times_sup(double c, double sup) { return c == 0.0 ? 0.0 : c * sup; }

// Estimate of sum_i w_i v_i for values precomputed at the rule's points.
Estimate rule_sum(const PointRule& rule, const std::vector<double>& v) {
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double wv = rule.weights[i] * v[i];
    sum += wv;
    sum_sq += wv * wv;
  }
  Estimate e{sum, 0.0, rule.method};
  if (rule.method == Method::monte_carlo && v.size() > 1) {
    const double n = static_cast<double>(v.size());
    const double var = std::max(0.0, (sum_sq * n - sum * sum) * n / (n - 1.0));
    e.std_error = std::sqrt(var / n);
  }
  return e;
}

// Thread-safe memo of Lambda_rho per polar matrix; the computation runs under the
// lock so a constant polar part is evaluated once.
class LambdaCache {
 public:
  LambdaCache(const Mollifier& m, const GaussianSpace& space, Method method)
      : m_(m), space_(space), method_(method) {}

  Estimate get(const Matrix& polar) {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [k, v] : entries_)
      if (k.rows() == polar.rows() && k == polar) return v;
    const Estimate e = objective_unchecked(m_, HSMatrix(polar), space_, method_);
    entries_.emplace_back(polar, e);
    return e;
  }

 private:
  const Mollifier& m_;
  GaussianSpace space_;
  Method method_;
  std::mutex mu_;
  std::vector<std::pair<Matrix, Estimate>> entries_;
};

}  // namespace

void require_integrable_divergence(const BVField& b, const GaussianSpace& space) {
  if (b.is_smooth()) return;
  const double jn = max_normal_jump(b, space);
  if (jn > 1e-12) {
    std::ostringstream os;
    os << "field '" << b.name() << "' has a normal jump of size " << jn
       << "; div b has a singular part and the commutator kernels are not integrable";
    throw NonIntegrableError(os.str());
  }
}

double commutator_residual(const BVField& b, const TimeFn& u, const Mollifier& m, const OUParams& p, double t,
                           const Point& x, const GaussianSpace& space, Method method) {
  if (b.dim() != m.dim || x.size() != b.dim()) throw std::invalid_argument("commutator_residual: dimension mismatch");
  require_integrable_divergence(b, space);
  const Vector bx = eval_field(b, x).value;
  const double divb = b.active_piece(x).euclid_div(x);
  // (x^eps, y^eps) = (a x - s y, s x + a y); at this point x_eps = x.
  //   B = -(1/C) <b(x^eps), D rho(y^eps)>
  //   A = -(e^eps / C) [ s rho div b(x) + <b(x), D rho(y^eps)> ]
  const double inv_c = 1.0 / p.C, ea_c = 1.0 / (p.a * p.C);
  return kernel_integral_linear(m, p.s * x, p.a, space, [&](const Point& y, double rho, const Vector& d_rho) {
           const Point xe = p.x_adj(x, y);
           const double uv = u(t, xe);
           if (uv == 0.0) return 0.0;
           const double bb = -inv_c * eval_field(b, xe).value.dot(d_rho);
           const double aa = -ea_c * (p.s * rho * divb + bx.dot(d_rho));
           return uv * (bb - aa);
         }, method).value;
}

double l1_divergence(const BVField& b, const GaussianSpace& space) {
  return expect(space, [&](const Point& x) { return std::abs(b.gauss_divergence_ac(x)); }).value;
}

double l1_norm(const BVField& b, const GaussianSpace& space) {
  return expect(space, [&](const Point& x) { return eval_field(b, x).value.norm(); }).value;
}

Estimate ou_remainder(const ScalarFn& divb, const OUParams& p, const GaussianSpace& space) {
  const int n = space.dim();
  const Rule1D sr = s_average_rule(p.eps);
  return expect(space.with_dim(2 * n), [&](const Point& z) {
    const Point x = z.head(n), y = z.tail(n);
    double avg = 0.0;
    for (std::size_t k = 0; k < sr.nodes.size(); ++k) {
      const OUParams q(sr.nodes[k]);
      avg += sr.weights[k] * q.a * divb(q.x_eps(x, y));
    }
    return std::abs(p.a * divb(p.x_eps(x, y)) - avg);
  });
}

Estimate lambda_rho(const Mollifier& m, const Matrix& polar, const GaussianSpace& space) {
  return objective(m, HSMatrix(polar), space);
}

Estimate anisotropic_bound(const DerivativeMeasure& dm, const Mollifier& m, const TestFunction& phi,
                           const GaussianSpace& space, Method inner) {
  require_valid_kernel(m, space, 1e-6);
  LambdaCache cache(m, space, inner);
  Estimate e = integrate_against_tv(
      dm, [&](const Point& x, const Matrix& polar) { return std::abs(phi.value(x)) * cache.get(polar).value; });
  // The inner estimates share one rule, so their errors add linearly.
  e.std_error += integrate_against_tv(dm, [&](const Point& x, const Matrix& polar) {
                   return std::abs(phi.value(x)) * cache.get(polar).std_error;
                 }).value;
  return e;
}

Estimate third_term(const DerivativeMeasure& dm, const Mollifier& m, const TestFunction& phi, const OUParams& p,
                    const GaussianSpace& space, AbsPlacement placement, Method inner) {
  if (placement == AbsPlacement::outside && m.measure_rule)
    throw std::invalid_argument("third_term: the outside placement needs a kernel without a measure rule");
  const Rule1D sr = s_average_rule(p.eps);
  std::vector<OUParams> qs, rest;
  for (double s : sr.nodes) {
    qs.emplace_back(s);
    rest.emplace_back(p.eps - s);
  }
  // At s: rho(w) (a_s Tr M + s_s <My, x>) + <My, D rho(w)>, w = y^s = s_s x + a_s y.
  const auto integrand = [&](std::size_t k, const Point& x, const Matrix& polar, const Point& y, double rho,
                         const Vector& d_rho) {
    const Vector my = polar * y;
    return rho * (qs[k].a * polar.trace() + qs[k].s * my.dot(x)) + my.dot(d_rho);
  };
  const GaussianSpace sp = space.with_dim(m.dim);
  if (placement == AbsPlacement::inside) {
    return integrate_against_tv(dm, [&](const Point& x, const Matrix& polar) {
      double acc = 0.0;
      for (std::size_t k = 0; k < qs.size(); ++k) {
        const OUParams& q = qs[k];
        const OUParams& r = rest[k];
        acc += sr.weights[k] *
               kernel_integral(m, q.s * x, q.a, sp, [&](const Point& y, double rho, const Vector& d_rho) {
                 return std::abs(phi.value(r.x_eps(x, y))) * std::abs(integrand(k, x, polar, y, rho, d_rho));
               }, inner).value;
      }
      return acc;
    });
  }
  return integrate_against_tv(dm, [&](const Point& x, const Matrix& polar) {
    return expect(sp, [&](const Point& y) {
             double acc = 0.0;
             for (std::size_t k = 0; k < qs.size(); ++k) {
               const Point w = qs[k].s * x + qs[k].a * y;
               const double rho = m.rho(w);
               const Vector d_rho = m.grad_rho(w) - rho * w;
               acc += sr.weights[k] * std::abs(phi.value(rest[k].x_eps(x, y))) * integrand(k, x, polar, y, rho, d_rho);
             }
             return std::abs(acc);
           }, inner)
        .value;
  });
}

double first_error(double eps, double phi_sup, double b_l1, double divb_l1, const Mollifier& m) {
  return std::sqrt(eps) * phi_sup * (times_sup(b_l1, m.sup_grad) + times_sup(divb_l1, m.sup_rho));
}

double second_error(const OUParams& p, double phi_sup, double b_l1, double remainder_l1, const Mollifier& m) {
  return times_sup(phi_sup * (remainder_l1 + p.eps / p.C * b_l1), m.sup_rho);
}

// ---------------------------------------------------------------------------

double weak_solution_residual(const BVField& b, const TimeFn& u, const std::vector<TestFunction>& phis,
                              double horizon, const GaussianSpace& space, int time_nodes) {
  if (!(horizon > 0.0)) throw std::invalid_argument("weak_solution_residual: horizon must be positive");
  const Rule1D tr = composite_gauss_legendre(0.0, horizon, std::max(1, time_nodes / 8), 8);
  const double w = std::numbers::pi / horizon;
  double worst = 0.0;
  for (const auto& phi : phis) {
    double acc = 0.0;
    for (std::size_t k = 0; k < tr.nodes.size(); ++k) {
      const double t = tr.nodes[k];
      const double chi = std::pow(std::sin(w * t), 2), dchi = w * std::sin(2.0 * w * t);
      acc += tr.weights[k] * expect(space, [&](const Point& x) {
                               const double uv = u(t, x);
                               return uv * (dchi * phi.value(x) + chi * phi.grad(x).dot(eval_field(b, x).value));
                             }).value;
    }
    worst = std::max(worst, std::abs(acc));
  }
  return worst;
}

double extrapolate_to_zero(const std::vector<double>& eps, const std::vector<double>& values) {
  if (eps.size() != values.size() || values.empty())
    throw std::invalid_argument("extrapolate_to_zero: need matching nonempty grids");
  // Neville: polynomial in eps through the last (up to four) points, evaluated at 0
  const std::size_t n = values.size(), k = std::min<std::size_t>(n, 4), first = n - k;
  std::vector<double> p(values.begin() + static_cast<std::ptrdiff_t>(first), values.end());
  for (std::size_t level = 1; level < k; ++level)
    for (std::size_t i = 0; i + level < k; ++i) {
      const double xi = eps[first + i], xj = eps[first + i + level];
      if (xi == xj) throw std::invalid_argument("extrapolate_to_zero: repeated eps");
      p[i] = (xi * p[i + 1] - xj * p[i]) / (xi - xj);
    }
  return p[0];
}

DefectReport defect_experiment(const DefectSetup& setup, const GaussianSpace& space) {
  if (setup.kernels.empty() || setup.phis.empty() || setup.betas.empty() || setup.eps_grid.empty())
    throw std::invalid_argument("defect_experiment: kernels, phis, betas and eps grid must be nonempty");
  if (setup.times.size() != setup.time_weights.size() || setup.times.empty())
    throw std::invalid_argument("defect_experiment: time nodes and weights differ in length");
  const BVField& b = setup.b;
  require_integrable_divergence(b, space);
  for (const auto& k : setup.limit_kernels) {
    if (k.dim != b.dim()) throw std::invalid_argument("defect_experiment: kernel '" + k.name + "' has wrong dimension");
    require_valid_kernel(k, space, 1e-6);
  }
  for (const auto& k : setup.kernels) {
    if (k.dim != b.dim()) throw std::invalid_argument("defect_experiment: kernel '" + k.name + "' has wrong dimension");
    require_valid_kernel(k, space, 1e-6);
  }

  DefectReport rep;
  rep.eps_grid = setup.eps_grid;
  std::vector<TestFunction> battery = test_function_battery(b.dim());
  battery.insert(battery.end(), setup.phis.begin(), setup.phis.end());
  rep.precheck_residual = weak_solution_residual(b, setup.u, battery, setup.horizon, space);
  rep.precheck_threshold = 1e-3 * std::max(setup.u_sup, 1e-300);
  rep.is_solution = rep.precheck_residual < rep.precheck_threshold;
  if (!rep.is_solution && setup.require_solution) {
    std::ostringstream os;
    os << "u is not a weak solution: residual " << rep.precheck_residual << " >= " << rep.precheck_threshold;
    throw NotASolutionError(os.str(), rep.precheck_residual);
  }

  const DerivativeMeasure dm = derivative_measure(b, space);
  const double b_l1 = l1_norm(b, space);
  const double divb_l1 = l1_divergence(b, space);
  double time_total = 0.0;
  for (double w : setup.time_weights) time_total += w;
  const PointRule outer = space_rule(space);
  const std::size_t nt = setup.times.size(), nx = outer.size();

  rep.chain_pass = true;
  for (const auto& k : setup.kernels) {
    const bool plain = !k.measure_rule;
    std::vector<std::vector<double>> residual_series(setup.phis.size());
    for (double eps : setup.eps_grid) {
      const OUParams p(eps);
      const double rem = ou_remainder([&](const Point& x) { return b.gauss_divergence_ac(x); }, p, space).value;
      // r^eps and u^eps at the outer nodes, per time node
      std::vector<double> r(nt * nx), ue(nt * nx);
      parallel_for(nx, [&](std::size_t i) {
        const Point& x = outer.points[i];
        for (std::size_t j = 0; j < nt; ++j) {
          r[j * nx + i] = commutator_residual(b, setup.u, k, p, setup.times[j], x, space);
          ue[j * nx + i] = apply_teps_adjoint(k, p, setup.u, setup.times[j], x, space);
        }
      });
      for (std::size_t f = 0; f < setup.phis.size(); ++f) {
        const TestFunction& phi = setup.phis[f];
        const Estimate third = time_total * third_term(dm, k, phi, p, space, AbsPlacement::inside, setup.aniso_method);
        const double alt = setup.abs_sensitivity && plain
                               ? time_total * third_term(dm, k, phi, p, space, AbsPlacement::outside, setup.aniso_method).value
                               : std::numeric_limits<double>::quiet_NaN();
        const double e1 = time_total * first_error(eps, phi.sup_abs, b_l1, divb_l1, k);
        const double e2 = time_total * second_error(p, phi.sup_abs, b_l1, rem, k);
        for (std::size_t bi = 0; bi < setup.betas.size(); ++bi) {
          const RenormFunction& beta = setup.betas[bi];
          std::vector<double> v(nx, 0.0);
          for (std::size_t i = 0; i < nx; ++i) {
            const double ph = phi.value(outer.points[i]);
            for (std::size_t j = 0; j < nt; ++j)
              v[i] += setup.time_weights[j] * std::abs(ph * beta.beta_prime(ue[j * nx + i]) * r[j * nx + i]);
          }
          DefectRow row;
          row.eps = eps;
          row.kernel = k.name;
          row.phi = phi.name;
          row.beta = beta.name;
          row.residual_pairing = rule_sum(outer, v);
          row.aniso_bound = third;
          row.aniso_alt = alt;
          row.first_error = e1;
          row.second_error = e2;
          row.rhs = setup.u_sup * beta.sup_beta_prime * (third.value + e1 + e2);
          const double slack = 4.0 * std::hypot(row.residual_pairing.std_error,
                                                 setup.u_sup * beta.sup_beta_prime * third.std_error);
          row.chain_pass = row.residual_pairing.value <= row.rhs + slack + 1e-12;
          rep.chain_pass = rep.chain_pass && row.chain_pass;
          if (bi == 0) residual_series[f].push_back(row.residual_pairing.value);
          rep.rows.push_back(std::move(row));
        }
      }
    }
    for (std::size_t f = 0; f < setup.phis.size(); ++f) {
      KernelLimit lim;
      lim.kernel = k.name;
      lim.phi = setup.phis[f].name;
      lim.aniso_limit = time_total * anisotropic_bound(dm, k, setup.phis[f], space, setup.aniso_method);
      lim.errors_finite = std::isfinite(k.sup_rho) && std::isfinite(k.sup_grad);
      // both error terms vanish as eps -> 0 for bounded kernels; unbounded
      // kernels have no finite sup-norm form and are flagged instead
      lim.error_limit = 0.0;
      lim.defect_limit = setup.u_sup * setup.betas.front().sup_beta_prime * lim.aniso_limit.value;
      lim.residual_limit = extrapolate_to_zero(setup.eps_grid, residual_series[f]);
      rep.limits.push_back(std::move(lim));
    }
  }
  for (const auto& k : setup.limit_kernels) {
    for (const auto& phi : setup.phis) {
      KernelLimit lim;
      lim.kernel = k.name;
      lim.phi = phi.name;
      lim.aniso_limit = time_total * anisotropic_bound(dm, k, phi, space, setup.aniso_method);
      lim.errors_finite = std::isfinite(k.sup_rho) && std::isfinite(k.sup_grad);
      lim.defect_limit = setup.u_sup * setup.betas.front().sup_beta_prime * lim.aniso_limit.value;
      lim.residual_limit = std::numeric_limits<double>::quiet_NaN();
      rep.limits.push_back(std::move(lim));
    }
  }
  rep.defect_limit = kInf;
  for (const auto& lim : rep.limits)
    if (lim.phi == setup.phis.front().name) rep.defect_limit = std::min(rep.defect_limit, lim.defect_limit);
  return rep;
}

// ---------------------------------------------------------------------------
// Identities
// ---------------------------------------------------------------------------

namespace {

// v(x, y)_i = sin(<alpha_i, x> + <beta_i, y> + c_i) + 0.3 x_i y_{i+1}
struct TestPairField {
  int n;
  Matrix alpha, beta;
  Vector c;

  TestPairField(int dim, std::uint64_t seed) : n(dim), alpha(dim, dim), beta(dim, dim), c(dim) {
    const CounterRng rng(seed, 0x76);
    std::uint64_t k = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        alpha(i, j) = 0.7 * rng.normal(k++);
        beta(i, j) = 0.7 * rng.normal(k++);
      }
      c[i] = rng.normal(k++);
    }
  }

  Vector value(const Point& x, const Point& y) const {
    Vector v(n);
    for (int i = 0; i < n; ++i)
      v[i] = std::sin(alpha.row(i).dot(x) + beta.row(i).dot(y) + c[i]) + 0.3 * x[i] * y[(i + 1) % n];
    return v;
  }
  double div_x(const Point& x, const Point& y) const {
    double d = 0.0;
    for (int i = 0; i < n; ++i)
      d += std::cos(alpha.row(i).dot(x) + beta.row(i).dot(y) + c[i]) * alpha(i, i) + 0.3 * y[(i + 1) % n];
    return d;
  }
  double div_y(const Point& x, const Point& y) const {
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
      d += std::cos(alpha.row(i).dot(x) + beta.row(i).dot(y) + c[i]) * beta(i, i);
      if ((i + 1) % n == i) d += 0.3 * x[i];
    }
    return d;
  }
};

// Euclidean divergence in y of y -> g(y) by central differences.
double fd_divergence(const std::function<Vector(const Point&)>& g, const Point& y, double h = 1e-5) {
  double d = 0.0;
  for (int i = 0; i < y.size(); ++i) {
    Point yp = y, ym = y;
    yp[i] += h;
    ym[i] -= h;
    d += (g(yp)[i] - g(ym)[i]) / (2.0 * h);
  }
  return d;
}

struct Sample {
  Point x, y;
  double s;
};

Sample draw_sample(const CounterRng& rng, int dim, int i) {
  Sample out{gaussian_draw(rng, dim, 2 * i), gaussian_draw(rng, dim, 2 * i + 1), 0.0};
  out.s = 0.05 + 1.95 * rng.uniform(0xFFFF0000ull + static_cast<std::uint64_t>(i));
  return out;
}

void finish(IdentityReport& rep, double tol) { rep.pass = rep.max_residual < tol; }

}  // namespace

IdentityReport gaussian_rotation_identity(int dim, int samples, std::uint64_t seed, double tol) {
  const TestPairField v(dim, seed);
  const CounterRng rng(seed, 0x47);
  IdentityReport rep{"gaussian rotation", samples, 0.0, false};
  for (int i = 0; i < samples; ++i) {
    const Sample smp = draw_sample(rng, dim, i);
    const OUParams p(smp.s);
    const auto comp = [&](const Point& y) { return v.value(p.x_eps(smp.x, y), p.y_eps(smp.x, y)); };
    const Point xs = p.x_eps(smp.x, smp.y), ys = p.y_eps(smp.x, smp.y);
    const Vector vs = v.value(xs, ys);
    const double lhs = fd_divergence(comp, smp.y) - comp(smp.y).dot(smp.y);
    const double rhs = p.s * (v.div_x(xs, ys) - vs.dot(xs)) + p.a * (v.div_y(xs, ys) - vs.dot(ys));
    rep.max_residual = std::max(rep.max_residual, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
  }
  finish(rep, tol);
  return rep;
}

IdentityReport euclidean_shear_identity(int dim, int samples, std::uint64_t seed, double tol) {
  const TestPairField v(dim, seed);
  const CounterRng rng(seed, 0x45);
  IdentityReport rep{"euclidean shear", samples, 0.0, false};
  for (int i = 0; i < samples; ++i) {
    const Sample smp = draw_sample(rng, dim, i);
    const auto comp = [&](const Point& y) { return v.value(smp.x - smp.s * y, y); };
    const Point xs = smp.x - smp.s * smp.y;
    const double lhs = fd_divergence(comp, smp.y);
    const double rhs = -smp.s * v.div_x(xs, smp.y) + v.div_y(xs, smp.y);
    rep.max_residual = std::max(rep.max_residual, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
  }
  finish(rep, tol);
  return rep;
}

IdentityReport ou_path_derivative(int dim, int samples, std::uint64_t seed, double tol) {
  const CounterRng rng(seed, 0x50);
  IdentityReport rep{"ou path derivative", samples, 0.0, false};
  const double h = 1e-6;
  for (int i = 0; i < samples; ++i) {
    const Sample smp = draw_sample(rng, dim, i);
    const OUParams p(smp.s), pp(smp.s + h), pm(smp.s - h);
    const Vector fd = (pp.x_eps(smp.x, smp.y) - pm.x_eps(smp.x, smp.y)) / (2.0 * h);
    const Vector exact = p.y_eps(smp.x, smp.y) / p.C;
    rep.max_residual = std::max(rep.max_residual, (fd - exact).norm() / std::max(1.0, exact.norm()));
  }
  finish(rep, tol);
  return rep;
}

}  // namespace renorm
