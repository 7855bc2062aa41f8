#include "renorm/optimizer.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <tuple>

namespace renorm {

namespace {

constexpr std::uint64_t kFlowStream = 0x466C6F77;  // shared by all horizons: common random numbers
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// rho_T dgamma (gaussian mode) or rho_T dy (lebesgue mode) as a finite mixture
// over time nodes. Component k is the law of exp(t_k M) Z with Z ~ gamma, or
// Z ~ bump. Everything is kept in log space: components at large t are far
// wider than gamma.
class FlowMixture {
 public:
  FlowMixture(const HSMatrix& m, const std::vector<double>& t, const std::vector<double>& w, KernelMode mode)
      : dim_(m.dim()), mode_(mode) {
    double total = 0.0;
    for (double x : w) total += x;
    const double tr = m.m.trace();
    for (std::size_t k = 0; k < t.size(); ++k) {
      weight_.push_back(w[k] / total);
      log_w_.push_back(std::log(w[k] / total));
      fwd_.push_back(expm(t[k] * m.m));
      inv_.push_back(expm(-t[k] * m.m));
      prec_.push_back(inv_.back().transpose() * inv_.back());
      // log |det exp(-tM)| = -t Tr M
      log_c_.push_back(-t[k] * tr);
    }
    if (mode_ == KernelMode::gaussian) {
      base_log_c_ = -0.5 * dim_ * std::log(2.0 * std::numbers::pi);
    } else {
      bump_ = lebesgue_bump(dim_);
      base_log_c_ = std::log(bump_.sup_rho) + 1.0;  // log of the bump normalizer 1/z
    }
  }

  int dim() const { return dim_; }

  double log_density(const Point& y) const {
    double best = kNegInf;
    std::vector<double> terms(fwd_.size());
    for (std::size_t k = 0; k < fwd_.size(); ++k) {
      terms[k] = log_w_[k] + component(k, y, nullptr);
      best = std::max(best, terms[k]);
    }
    if (best == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double v : terms) acc += std::exp(v - best);
    return best + std::log(acc);
  }

  Vector grad_log_density(const Point& y) const {
    if (mode_ == KernelMode::gaussian) return gaussian_grad_log_density(y);
    std::vector<double> terms(fwd_.size());
    std::vector<Vector> grads(fwd_.size());
    double best = kNegInf;
    for (std::size_t k = 0; k < fwd_.size(); ++k) {
      terms[k] = log_w_[k] + component(k, y, &grads[k]);
      best = std::max(best, terms[k]);
    }
    Vector g = Vector::Zero(dim_);
    if (best == kNegInf) return g;
    double norm = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
      if (terms[k] == kNegInf) continue;
      const double pk = std::exp(terms[k] - best);
      norm += pk;
      g += pk * grads[k];
    }
    return g / norm;
  }

  std::shared_ptr<const PointRule> rule(const GaussianSpace& space, Method method) const {
    const Method resolved = space.resolve(method);
    const auto key = std::make_tuple(static_cast<int>(resolved), space.quad_order(), space.mc_budget(), space.seed());
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto built = std::make_shared<const PointRule>(resolved == Method::quadrature ? quadrature_rule(space)
                                                                                  : monte_carlo(space));
    cache_.emplace(key, built);
    return built;
  }

 private:
  // y^T P_k y without temporaries
  double quad_form(std::size_t k, const Point& y) const {
    const Matrix& p = prec_[k];
    double acc = 0.0;
    for (int j = 0; j < dim_; ++j) {
      double row = 0.0;
      for (int i = 0; i < dim_; ++i) row += p(i, j) * y[i];
      acc += row * y[j];
    }
    return acc;
  }

  // Gaussian components: log N_k(y) = c_k - y^T P_k y / 2, grad = -P_k y, so the
  // mixture score is -(sum_k p_k P_k) y with posterior weights p_k.
  Vector gaussian_grad_log_density(const Point& y) const {
    const std::size_t n = fwd_.size();
    double best = kNegInf;
    std::vector<double> terms(n);
    for (std::size_t k = 0; k < n; ++k) {
      terms[k] = log_w_[k] + log_c_[k] - 0.5 * quad_form(k, y);
      best = std::max(best, terms[k]);
    }
    Matrix acc = Matrix::Zero(dim_, dim_);
    double norm = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double pk = std::exp(terms[k] - best);
      if (pk < 1e-300) continue;
      norm += pk;
      acc.noalias() += pk * prec_[k];
    }
    return -(acc * y) / norm;
  }

  // log of component density k at y (without the mixture weight); optional gradient.
  double component(std::size_t k, const Point& y, Vector* grad) const {
    if (mode_ == KernelMode::gaussian) {
      if (grad) *grad = -(prec_[k] * y);
      return base_log_c_ + log_c_[k] - 0.5 * quad_form(k, y);
    }
    const Point z = inv_[k] * y;
    const double r2 = z.squaredNorm();
    if (r2 >= 1.0) {
      if (grad) *grad = Vector::Zero(dim_);
      return kNegInf;
    }
    const double q = 1.0 - r2;
    if (grad) *grad = inv_[k].transpose() * (-2.0 / (q * q) * z);
    return base_log_c_ + log_c_[k] - 1.0 / q;
  }

  PointRule quadrature_rule(const GaussianSpace& space) const {
    PointRule base;
    if (mode_ == KernelMode::gaussian) {
      base = tensor_hermite_rule(dim_, space.quad_order());
    } else {
      const PointRule box = box_rule(dim_, 1.0, dim_ == 1 ? 256 : (dim_ == 2 ? 64 : 24));
      for (std::size_t j = 0; j < box.size(); ++j) {
        const double b = bump_.rho(box.points[j]);
        if (b == 0.0) continue;
        base.points.push_back(box.points[j]);
        base.weights.push_back(box.weights[j] * b);
      }
    }
    PointRule out;
    out.method = Method::quadrature;
    out.points.reserve(base.size() * fwd_.size());
    out.weights.reserve(base.size() * fwd_.size());
    for (std::size_t k = 0; k < fwd_.size(); ++k) {
      for (std::size_t j = 0; j < base.size(); ++j) {
        out.points.push_back(fwd_[k] * base.points[j]);
        out.weights.push_back(weight_[k] * base.weights[j]);
      }
    }
    return out;
  }

  // Stratified over components (sample i goes to the component whose cumulative
  // weight covers (i + 1/2)/n); the reported error treats draws as i.i.d.,
  // which only overstates it.
  PointRule monte_carlo(const GaussianSpace& space) const {
    const std::int64_t n = space.mc_budget();
    const CounterRng rng(space.seed(), kFlowStream);
    PointRule out;
    out.method = Method::monte_carlo;
    out.points.reserve(static_cast<std::size_t>(n));
    out.weights.reserve(static_cast<std::size_t>(n));
    std::size_t k = 0;
    double cum = weight_[0];
    const double box_volume = std::pow(2.0, dim_);
    for (std::int64_t i = 0; i < n; ++i) {
      const double c = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      while (c > cum && k + 1 < weight_.size()) cum += weight_[++k];
      if (mode_ == KernelMode::gaussian) {
        out.points.push_back(fwd_[k] * gaussian_draw(rng, dim_, i));
        out.weights.push_back(1.0 / static_cast<double>(n));
      } else {
        Point v(dim_);
        for (int d = 0; d < dim_; ++d)
          v[d] = 2.0 * rng.uniform(static_cast<std::uint64_t>(i) * dim_ + d) - 1.0;
        out.points.push_back(fwd_[k] * v);
        out.weights.push_back(bump_.rho(v) * box_volume / static_cast<double>(n));
      }
    }
    return out;
  }

  int dim_;
  KernelMode mode_;
  std::vector<double> weight_, log_w_, log_c_;
  std::vector<Matrix> fwd_, inv_, prec_;
  double base_log_c_ = 0.0;
  Mollifier bump_;
  mutable std::mutex mu_;
  mutable std::map<std::tuple<int, int, std::int64_t, std::uint64_t>, std::shared_ptr<const PointRule>> cache_;
};

std::string horizon_label(double horizon) {
  std::ostringstream os;
  os << "flow(T=" << horizon << ")";
  return os.str();
}

void time_rule(double horizon, int nodes, std::vector<double>& t, std::vector<double>& w) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (nodes < 4) throw std::invalid_argument("averaged kernel needs at least 4 time nodes");
  const Rule1D r = nodes <= 8 ? gauss_legendre_rule(nodes, 0.0, horizon)
                              : composite_gauss_legendre(0.0, horizon, (nodes + 7) / 8, 8);
  t = r.nodes;
  w = r.weights;
}

Mollifier mixture_kernel(const std::shared_ptr<const FlowMixture>& mix, KernelMode mode, double horizon,
                         bool zero_matrix) {
  const int dim = mix->dim();
  Mollifier k;
  k.name = horizon_label(horizon);
  k.mode = mode;
  k.dim = dim;
  k.identically_one = zero_matrix && mode == KernelMode::gaussian;
  const double log_gauss = 0.5 * dim * std::log(2.0 * std::numbers::pi);
  k.score = [mix](const Point& y) { return mix->grad_log_density(y); };
  if (mode == KernelMode::gaussian) {
    k.rho = [mix, log_gauss](const Point& y) {
      return std::exp(mix->log_density(y) + 0.5 * y.squaredNorm() + log_gauss);
    };
    k.grad_rho = [rho = k.rho, mix](const Point& y) {
      const double r = rho(y);
      return (r * (mix->grad_log_density(y) + y)).eval();
    };
  } else {
    k.rho = [mix](const Point& y) { return std::exp(mix->log_density(y)); };
    k.grad_rho = [rho = k.rho, mix](const Point& y) {
      const double r = rho(y);
      if (r == 0.0) return Vector::Zero(y.size()).eval();
      return (r * mix->grad_log_density(y)).eval();
    };
  }
  k.measure_rule = [mix](const GaussianSpace& space, Method method) { return mix->rule(space, method); };
  // a mixture of probability measures with weights summing to one
  k.mass_override = [](const GaussianSpace&) { return Estimate{1.0, 0.0, Method::quadrature}; };
  return k;
}

// rho_T = sum_k (w_k / T) u_{t_k}, one single-node kernel per time node
void add_components(AveragedKernel& out, KernelMode mode) {
  for (std::size_t k = 0; k < out.time_nodes.size(); ++k) {
    auto single = std::make_shared<const FlowMixture>(out.matrix, std::vector<double>{out.time_nodes[k]},
                                                      std::vector<double>{1.0}, mode);
    out.kernel.components.push_back(mixture_kernel(single, mode, out.horizon, out.matrix.hs_norm == 0.0));
    out.kernel.component_weights.push_back(out.time_weights[k] / out.horizon);
  }
}

}  // namespace

int default_time_nodes(const HSMatrix& m, double horizon) {
  const int panels = std::max(1, static_cast<int>(std::ceil(2.0 * horizon * m.hs_norm)));
  return 8 * panels;
}

AveragedKernel averaged_kernel(const HSMatrix& m, double horizon, int nodes, const GaussianSpace& space) {
  (void)space;
  AveragedKernel out;
  out.matrix = m;
  out.horizon = horizon;
  out.mode = KernelMode::gaussian;
  time_rule(horizon, nodes <= 0 ? default_time_nodes(m, horizon) : nodes, out.time_nodes, out.time_weights);

  // W^{1,p} witness: the smallest admissible p over the nodes must work at every node
  std::vector<FlowSolution> sols;
  double excess = std::numeric_limits<double>::infinity();
  for (double t : out.time_nodes) {
    sols.emplace_back(m, t);
    excess = std::min(excess, select_p_excess(sols.back()));
  }
  for (const auto& fs : sols) {
    const double lambda = Eigen::SelfAdjointEigenSolver<Matrix>(fs.sigma()).eigenvalues().maxCoeff();
    if (!(excess * (lambda - 1.0) < 1.0)) {
      std::ostringstream os;
      os << "integrability check failed at t=" << fs.t() << ", p=1+" << excess;
      throw std::domain_error(os.str());
    }
  }
  out.p_excess = excess;

  auto mix = std::make_shared<const FlowMixture>(m, out.time_nodes, out.time_weights, KernelMode::gaussian);
  out.kernel = mixture_kernel(mix, KernelMode::gaussian, horizon, m.hs_norm == 0.0);
  add_components(out, KernelMode::gaussian);
  return out;
}

AveragedKernel averaged_kernel_lebesgue(const HSMatrix& m, double horizon, int nodes) {
  AveragedKernel out;
  out.matrix = m;
  out.horizon = horizon;
  out.mode = KernelMode::lebesgue;
  time_rule(horizon, nodes <= 0 ? default_time_nodes(m, horizon) : nodes, out.time_nodes, out.time_weights);
  auto mix = std::make_shared<const FlowMixture>(m, out.time_nodes, out.time_weights, KernelMode::lebesgue);
  out.kernel = mixture_kernel(mix, KernelMode::lebesgue, horizon, false);
  return out;
}

Estimate objective_unchecked(const Mollifier& rho, const HSMatrix& m, const GaussianSpace& space, Method method) {
  if (m.dim() != rho.dim) throw std::invalid_argument("objective: matrix and kernel dimensions differ");
  const GaussianSpace sp = space.with_dim(rho.dim);
  const Matrix& a = m.m;
  const double tr = a.trace();
  // |.| kinks make tensor quadrature biased on the wide mixture rules
  if (rho.measure_rule && method == Method::automatic) method = Method::monte_carlo;
  if (rho.mode == KernelMode::gaussian) {
    if (rho.measure_rule) {
      // |div_gamma(My rho)| / rho = |Tr M + <My, score>|, score = grad log(rho gamma)
      return expect_rule(*rho.measure_rule(sp, method), [&](const Point& y) {
        return std::abs(tr + (a * y).dot(rho.score(y)));
      });
    }
    return expect(sp, [&](const Point& y) {
      const Vector my = a * y;
      return std::abs((tr - my.dot(y)) * rho.rho(y) + my.dot(rho.grad_rho(y)));
    }, method);
  }
  if (rho.measure_rule) {
    return expect_rule(*rho.measure_rule(sp, method), [&](const Point& y) {
      return std::abs(tr + (a * y).dot(rho.score(y)));
    });
  }
  if (!std::isfinite(rho.support_radius)) throw std::invalid_argument("lebesgue objective needs a finite support");
  const int n = rho.dim == 1 ? 2048 : (rho.dim == 2 ? 256 : 48);
  return expect_rule(box_rule(rho.dim, rho.support_radius, n), [&](const Point& y) {
    return std::abs(tr * rho.rho(y) + (a * y).dot(rho.grad_rho(y)));
  });
}

Estimate objective(const Mollifier& rho, const HSMatrix& m, const GaussianSpace& space, Method method) {
  require_valid_kernel(rho, space, 1e-6);
  return objective_unchecked(rho, m, space, method);
}

BoundReport verify_bound(const HSMatrix& m, const std::vector<double>& horizons, const GaussianSpace& space,
                         KernelMode mode, Method method) {
  if (horizons.empty()) throw std::invalid_argument("verify_bound: empty horizon grid");
  BoundReport rep;
  rep.scale = m.hs_norm;
  const bool zero = m.hs_norm == 0.0;
  rep.matrix = zero ? m : m.normalized();
  rep.pass = true;
  for (double horizon : horizons) {
    BoundRow row;
    row.horizon = horizon;
    row.bound = 2.0 / horizon;
    if (!zero) {
      const AveragedKernel k = mode == KernelMode::gaussian
                                   ? averaged_kernel(rep.matrix, horizon, 0, space)
                                   : averaged_kernel_lebesgue(rep.matrix, horizon);
      const Estimate j = objective(k.kernel, rep.matrix, space, method);
      row.J = j.value;
      row.std_error = j.std_error;
    }
    row.pass = row.J <= row.bound + 4.0 * row.std_error;
    rep.pass = rep.pass && row.pass;
    rep.rows.push_back(row);
  }
  std::vector<BoundRow> sorted = rep.rows;
  std::sort(sorted.begin(), sorted.end(), [](const BoundRow& x, const BoundRow& y) { return x.horizon < y.horizon; });
  rep.monotone = true;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const double tol = 4.0 * std::hypot(sorted[i].std_error, sorted[i - 1].std_error);
    if (sorted[i].J > sorted[i - 1].J + tol) rep.monotone = false;
  }
  return rep;
}

}  // namespace renorm
