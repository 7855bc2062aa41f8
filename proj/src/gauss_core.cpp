#include "renorm/gauss_core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>
#include <tuple>

namespace renorm {

std::string to_string(Method m) {
  switch (m) {
    case Method::automatic: return "automatic";
    case Method::quadrature: return "quadrature";
    case Method::monte_carlo: return "monte-carlo";
  }
  return "?";
}

Estimate operator+(const Estimate& a, const Estimate& b) {
  Method m = (a.method == Method::monte_carlo || b.method == Method::monte_carlo)
                 ? Method::monte_carlo
                 : Method::quadrature;
  return {a.value + b.value, std::hypot(a.std_error, b.std_error), m};
}

Estimate operator*(double c, const Estimate& e) {
  return {c * e.value, std::abs(c) * e.std_error, e.method};
}

GaussianSpace::GaussianSpace(int dim, int quad_order, std::int64_t mc_budget, std::uint64_t seed)
    : dim_(dim), quad_order_(quad_order), mc_budget_(mc_budget), seed_(seed) {
  if (dim < 1) throw std::invalid_argument("GaussianSpace: dim must be >= 1");
  if (quad_order < 2) throw std::invalid_argument("GaussianSpace: quad_order must be >= 2");
  if (mc_budget < 1) throw std::invalid_argument("GaussianSpace: mc_budget must be >= 1");
}

GaussianSpace GaussianSpace::with_dim(int dim) const {
  return GaussianSpace(dim, quad_order_, mc_budget_, seed_);
}
GaussianSpace GaussianSpace::with_quad_order(int order) const {
  return GaussianSpace(dim_, order, mc_budget_, seed_);
}
GaussianSpace GaussianSpace::with_budget(std::int64_t budget) const {
  return GaussianSpace(dim_, quad_order_, budget, seed_);
}
GaussianSpace GaussianSpace::with_seed(std::uint64_t seed) const {
  return GaussianSpace(dim_, quad_order_, mc_budget_, seed);
}

// --------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(seed ^ splitmix64(stream + 0x632BE59BD9B4E019ULL))) {}

double CounterRng::uniform(std::uint64_t counter) const {
  std::uint64_t bits = splitmix64(key_ + counter * 0x9E3779B97F4A7C15ULL);
  // 53 random bits, shifted off zero
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t counter) const {
  const std::uint64_t pair = counter / 2;
  const double u1 = uniform(2 * pair);
  const double u2 = uniform(2 * pair + 1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (counter % 2 == 0) ? r * std::cos(angle) : r * std::sin(angle);
}

Point gaussian_draw(const CounterRng& rng, int dim, std::int64_t index) {
  Point p(dim);
  const auto base = static_cast<std::uint64_t>(index) * static_cast<std::uint64_t>(dim);
  for (int k = 0; k < dim; ++k) p[k] = rng.normal(base + static_cast<std::uint64_t>(k));
  return p;
}

std::vector<Point> sample_gaussian(const GaussianSpace& space, std::int64_t count,
                                   std::uint64_t stream) {
  if (count < 1) throw std::invalid_argument("sample_gaussian: count must be >= 1");
  CounterRng rng(space.seed(), stream);
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) out.push_back(gaussian_draw(rng, space.dim(), i));
  return out;
}

// --------------------------------------------------------------------------

namespace {

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix, weights the
// squared first eigenvector components times the total mass.
Rule1D golub_welsch(const Eigen::VectorXd& offdiag, int n, double mass) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k + 1 < n; ++k) {
    jac(k, k + 1) = offdiag[k];
    jac(k + 1, k) = offdiag[k];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  Rule1D rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = es.eigenvalues()[i];
    rule.weights[i] = mass * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  }
  return rule;
}

}  // namespace

const Rule1D& gauss_hermite_rule(int n) {
  static std::mutex mu;
  static std::map<int, Rule1D> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n < 1) throw std::invalid_argument("gauss_hermite_rule: n must be >= 1");
  Eigen::VectorXd off(std::max(n - 1, 0));
  for (int k = 0; k + 1 < n; ++k) off[k] = std::sqrt(static_cast<double>(k + 1));
  Rule1D rule = golub_welsch(off, n, 1.0);
  // symmetrize to remove eigen-solver round-off
  for (int i = 0; i < n / 2; ++i) {
    const double x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  double total = 0.0;
  for (double w : rule.weights) total += w;
  for (double& w : rule.weights) w /= total;
  return cache.emplace(n, std::move(rule)).first->second;
}

Rule1D gauss_legendre_rule(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre_rule: n must be >= 1");
  Eigen::VectorXd off(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) off[k - 1] = k / std::sqrt(4.0 * k * k - 1.0);
  Rule1D rule = golub_welsch(off, n, 2.0);
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = mid + half * rule.nodes[i];
    rule.weights[i] *= half;
  }
  return rule;
}

Rule1D composite_gauss_legendre(double a, double b, int panels, int n) {
  Rule1D out;
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    Rule1D r = gauss_legendre_rule(n, a + p * h, a + (p + 1) * h);
    out.nodes.insert(out.nodes.end(), r.nodes.begin(), r.nodes.end());
    out.weights.insert(out.weights.end(), r.weights.begin(), r.weights.end());
  }
  return out;
}

PointRule tensor_hermite_rule(int dim, int order) {
  const Rule1D& r = gauss_hermite_rule(order);
  std::size_t total = 1;
  for (int k = 0; k < dim; ++k) total *= static_cast<std::size_t>(order);
  PointRule rule;
  rule.points.reserve(total);
  rule.weights.reserve(total);
  std::vector<int> idx(dim, 0);
  for (std::size_t n = 0; n < total; ++n) {
    Point p(dim);
    double w = 1.0;
    for (int k = 0; k < dim; ++k) {
      p[k] = r.nodes[idx[k]];
      w *= r.weights[idx[k]];
    }
    rule.points.push_back(std::move(p));
    rule.weights.push_back(w);
    for (int k = 0; k < dim; ++k) {
      if (++idx[k] < order) break;
      idx[k] = 0;
    }
  }
  rule.method = Method::quadrature;
  return rule;
}

PointRule monte_carlo_rule(const GaussianSpace& space, std::int64_t count, std::uint64_t stream) {
  PointRule rule;
  rule.points = sample_gaussian(space, count, stream);
  rule.weights.assign(rule.points.size(), 1.0 / static_cast<double>(count));
  rule.method = Method::monte_carlo;
  return rule;
}

PointRule space_rule(const GaussianSpace& space, Method method) {
  if (space.resolve(method) == Method::quadrature)
    return tensor_hermite_rule(space.dim(), space.quad_order());
  return monte_carlo_rule(space, space.mc_budget());
}

std::shared_ptr<const PointRule> shared_space_rule(const GaussianSpace& space, Method method) {
  // Inner integrals request the same few rules millions of times.
  using Key = std::tuple<int, int, int, std::int64_t, std::uint64_t>;
  static std::mutex mu;
  static std::map<Key, std::shared_ptr<const PointRule>> cache;
  const Method m = space.resolve(method);
  const Key key = m == Method::quadrature ? Key{0, space.dim(), space.quad_order(), 0, 0}
                                          : Key{1, space.dim(), 0, space.mc_budget(), space.seed()};
  {
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto rule = std::make_shared<const PointRule>(space_rule(space, m));
  std::lock_guard<std::mutex> lock(mu);
  if (cache.size() >= 64) cache.clear();
  return cache.emplace(key, std::move(rule)).first->second;
}

// --------------------------------------------------------------------------

int thread_count() {
  if (const char* env = std::getenv("RENORM_LAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace {
// Nested calls run inline so inner integrals do not oversubscribe the machine.
thread_local bool inside_parallel_region = false;
}  // namespace

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const int threads = static_cast<int>(std::min<std::size_t>(thread_count(), n));
  if (threads <= 1 || inside_parallel_region) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      inside_parallel_region = true;
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

constexpr std::size_t kShards = 64;

struct ShardSum {
  double sum = 0.0;
  double sum_sq = 0.0;
};

[[noreturn]] void throw_non_finite(const Point& x, double v) {
  std::ostringstream os;
  os << "non-finite integrand value " << v << " at point (";
  for (int k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x[k];
  os << ")";
  throw NonFiniteError(os.str(), x);
}

}  // namespace

Estimate expect_rule(const PointRule& rule, const ScalarFn& f) {
  const std::size_t n = rule.size();
  if (n == 0) throw std::invalid_argument("expect_rule: empty rule");
  // Fixed shard boundaries and in-order reduction keep results
  // independent of the thread count.
  std::vector<ShardSum> shards(std::min(kShards, n));
  const std::size_t per = (n + shards.size() - 1) / shards.size();
  parallel_for(shards.size(), [&](std::size_t s) {
    ShardSum acc;
    const std::size_t lo = s * per, hi = std::min(n, lo + per);
    for (std::size_t i = lo; i < hi; ++i) {
      const double v = f(rule.points[i]);
      if (!std::isfinite(v)) throw_non_finite(rule.points[i], v);
      const double wv = rule.weights[i] * v;
      acc.sum += wv;
      acc.sum_sq += wv * wv;
    }
    shards[s] = acc;
  });
  ShardSum total;
  for (const auto& s : shards) {
    total.sum += s.sum;
    total.sum_sq += s.sum_sq;
  }
  Estimate e{total.sum, 0.0, rule.method};
  if (rule.method == Method::monte_carlo && n > 1) {
    // weights are 1/n (or importance weights already folded into w_i/n)
    const double nn = static_cast<double>(n);
    const double mean_sq = total.sum_sq * nn;  // mean of (n w v)^2 / n
    const double var = std::max(0.0, (mean_sq - total.sum * total.sum) * nn / (nn - 1.0));
    e.std_error = std::sqrt(var / nn);
  }
  return e;
}

Estimate expect(const GaussianSpace& space, const ScalarFn& f, Method method) {
  return expect_rule(*shared_space_rule(space, method), f);
}

Estimate expect_scaled(const GaussianSpace& space, const ScalarFn& f, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("expect_scaled: scale must be positive");
  const int n = space.dim();
  const double jac = std::pow(scale, n);
  const double c = 0.5 * (1.0 - scale * scale);
  return expect_rule(tensor_hermite_rule(n, space.quad_order()), [&](const Point& z) {
    return f(scale * z) * jac * std::exp(c * z.squaredNorm());
  });
}

double gauss_density(const Point& x) {
  return std::pow(2.0 * std::numbers::pi, -0.5 * x.size()) * std::exp(-0.5 * x.squaredNorm());
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// --------------------------------------------------------------------------

TestFunction constant_test_function(int dim, double c) {
  return {"const", [c](const Point&) { return c; }, [dim](const Point&) { return Vector::Zero(dim); },
          std::abs(c)};
}

std::vector<TestFunction> test_function_battery(int dim) {
  const int i = 0;
  const int j = dim > 1 ? 1 : 0;
  auto unit = [dim](int k, double v) {
    Vector g = Vector::Zero(dim);
    g[k] += v;
    return g;
  };
  std::vector<TestFunction> out;
  out.push_back(constant_test_function(dim));
  out.push_back({"cos_x1", [=](const Point& x) { return std::cos(x[i]); },
                 [=](const Point& x) { return unit(i, -std::sin(x[i])); }, 1.0});
  out.push_back({"sin_x1_half_x2", [=](const Point& x) { return std::sin(x[i] + 0.5 * x[j]); },
                 [=](const Point& x) {
                   const double c = std::cos(x[i] + 0.5 * x[j]);
                   Vector g = unit(i, c);
                   g[j] += 0.5 * c;
                   return g;
                 },
                 1.0});
  out.push_back({"gauss_bump", [](const Point& x) { return std::exp(-0.25 * x.squaredNorm()); },
                 [](const Point& x) { return Vector(-0.5 * std::exp(-0.25 * x.squaredNorm()) * x); },
                 1.0});
  out.push_back({"erf_x1", [=](const Point& x) { return std::erf(x[i]); },
                 [=](const Point& x) {
                   return unit(i, 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x[i] * x[i]));
                 },
                 1.0});
  out.push_back({"damped_x1x2",
                 [=](const Point& x) { return x[i] * x[j] * std::exp(-0.25 * (x[i] * x[i] + x[j] * x[j])); },
                 [=](const Point& x) {
                   const double e = std::exp(-0.25 * (x[i] * x[i] + x[j] * x[j]));
                   Vector g = Vector::Zero(x.size());
                   if (i == j) {
                     g[i] = (2.0 * x[i] - std::pow(x[i], 3)) * e;
                   } else {
                     g[i] = x[j] * (1.0 - 0.5 * x[i] * x[i]) * e;
                     g[j] = x[i] * (1.0 - 0.5 * x[j] * x[j]) * e;
                   }
                   return g;
                 },
                 2.0 * std::exp(-1.0)});
  out.push_back({"shifted_bump_cos",
                 [=](const Point& x) { return std::exp(-(x[i] - 0.5) * (x[i] - 0.5)) * std::cos(x[j]); },
                 [=](const Point& x) {
                   const double e = std::exp(-(x[i] - 0.5) * (x[i] - 0.5));
                   Vector g = unit(i, -2.0 * (x[i] - 0.5) * e * std::cos(x[j]));
                   g[j] += -e * std::sin(x[j]);
                   return g;
                 },
                 1.0});
  out.push_back({"sin_x1_cos_x2", [=](const Point& x) { return std::sin(x[i]) * std::cos(x[j]); },
                 [=](const Point& x) {
                   Vector g = unit(i, std::cos(x[i]) * std::cos(x[j]));
                   g[j] += -std::sin(x[i]) * std::sin(x[j]);
                   return g;
                 },
                 1.0});
  out.push_back({"x1_gauss", [=](const Point& x) { return x[i] * std::exp(-0.5 * x[i] * x[i]); },
                 [=](const Point& x) {
                   return unit(i, (1.0 - x[i] * x[i]) * std::exp(-0.5 * x[i] * x[i]));
                 },
                 std::exp(-0.5)});
  out.push_back({"erf_diff", [=](const Point& x) { return std::erf(0.5 * (x[i] - 0.7 * x[j])); },
                 [=](const Point& x) {
                   const double u = 0.5 * (x[i] - 0.7 * x[j]);
                   const double d = std::exp(-u * u) / std::sqrt(std::numbers::pi);
                   Vector g = unit(i, d);
                   g[j] += -0.7 * d;
                   return g;
                 },
                 1.0});
  return out;
}

}  // namespace renorm
