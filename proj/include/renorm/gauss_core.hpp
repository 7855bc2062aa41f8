#pragma once

// Standard Gaussian measure on R^N: tensor Gauss-Hermite quadrature,
// counter-based reproducible Monte Carlo, and shared numerical helpers.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace renorm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Point = Eigen::VectorXd;

enum class Method { automatic, quadrature, monte_carlo };

std::string to_string(Method m);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  Method method = Method::quadrature;
};

/// Sum of two independent estimates; errors combine in quadrature.
Estimate operator+(const Estimate& a, const Estimate& b);
Estimate operator*(double c, const Estimate& e);

/// Raised when an integrand returns NaN or inf; carries the offending point.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, Point where)
      : std::runtime_error(what), point_(std::move(where)) {}
  const Point& point() const { return point_; }

 private:
  Point point_;
};

class GaussianSpace {
 public:
  explicit GaussianSpace(int dim, int quad_order = 12, std::int64_t mc_budget = 100000,
                         std::uint64_t seed = 20140301);

  int dim() const { return dim_; }
  int quad_order() const { return quad_order_; }
  std::int64_t mc_budget() const { return mc_budget_; }
  std::uint64_t seed() const { return seed_; }

  GaussianSpace with_dim(int dim) const;
  GaussianSpace with_quad_order(int order) const;
  GaussianSpace with_budget(std::int64_t budget) const;
  GaussianSpace with_seed(std::uint64_t seed) const;

  /// Tensor quadrature up to dim 4, Monte Carlo beyond.
  Method default_method() const { return dim_ <= 4 ? Method::quadrature : Method::monte_carlo; }
  Method resolve(Method m) const { return m == Method::automatic ? default_method() : m; }

 private:
  int dim_;
  int quad_order_;
  std::int64_t mc_budget_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Random numbers
//
// SplitMix64 used as a counter-based generator: draw k of stream s is
// mix(key(seed, s) + k * golden). Any draw can be addressed directly, so
// sharded Monte Carlo is bit-identical to the sequential loop on every
// platform and thread count.
// ---------------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x);

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  /// Uniform in (0,1), never exactly 0 or 1.
  double uniform(std::uint64_t counter) const;
  /// Standard normal via Box-Muller on uniforms (2k, 2k+1).
  double normal(std::uint64_t counter) const;

 private:
  std::uint64_t key_;
};

/// i.i.d. standard normal vectors; point i uses counters [i*dim, (i+1)*dim).
std::vector<Point> sample_gaussian(const GaussianSpace& space, std::int64_t count,
                                   std::uint64_t stream = 0);
Point gaussian_draw(const CounterRng& rng, int dim, std::int64_t index);

// ---------------------------------------------------------------------------
// Quadrature rules
// ---------------------------------------------------------------------------

struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Probabilists' Gauss-Hermite rule: sum w_i f(x_i) ~ E f(Z), Z ~ N(0,1).
const Rule1D& gauss_hermite_rule(int n);
Rule1D gauss_legendre_rule(int n, double a, double b);
Rule1D composite_gauss_legendre(double a, double b, int panels, int n);

/// A weighted point set approximating a probability measure.
struct PointRule {
  std::vector<Point> points;
  std::vector<double> weights;
  Method method = Method::quadrature;
  std::size_t size() const { return points.size(); }
};

/// Tensor Gauss-Hermite rule on R^dim (order^dim points).
PointRule tensor_hermite_rule(int dim, int order);
/// Equal-weight Monte Carlo rule from the space's seed and a stream id.
PointRule monte_carlo_rule(const GaussianSpace& space, std::int64_t count, std::uint64_t stream = 0);
/// The rule `expect` would use for the given method.
PointRule space_rule(const GaussianSpace& space, Method method = Method::automatic);
/// Same rule from a process-wide cache.
std::shared_ptr<const PointRule> shared_space_rule(const GaussianSpace& space, Method method = Method::automatic);

// ---------------------------------------------------------------------------
// Expectations
// ---------------------------------------------------------------------------

using ScalarFn = std::function<double(const Point&)>;

Estimate expect(const GaussianSpace& space, const ScalarFn& f, Method method = Method::automatic);

/// Expectation over an explicit rule. Monte Carlo rules report a standard error.
Estimate expect_rule(const PointRule& rule, const ScalarFn& f);

/// Quadrature with the Gauss-Hermite rule dilated by `scale`:
/// E f = E[ f(scale z) phi(scale z) / phi(z) scale^N ]. Suited to integrands
/// carrying a wider Gaussian factor.
Estimate expect_scaled(const GaussianSpace& space, const ScalarFn& f, double scale);

/// (2 pi)^{-N/2} exp(-|x|^2/2)
double gauss_density(const Point& x);
double normal_pdf(double x);
double normal_cdf(double x);

// ---------------------------------------------------------------------------
// Parallel helpers. Thread count honours RENORM_LAB_THREADS.
// ---------------------------------------------------------------------------

int thread_count();
/// Runs body(i) for i in [0,n); each index runs exactly once. Exceptions are rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// ---------------------------------------------------------------------------
// Smooth cylindrical test functions with closed-form gradients.
// ---------------------------------------------------------------------------

struct TestFunction {
  std::string name;
  std::function<double(const Point&)> value;
  std::function<Vector(const Point&)> grad;
  double sup_abs = 1.0;
};

/// Ten bounded smooth test functions on R^dim.
std::vector<TestFunction> test_function_battery(int dim);
TestFunction constant_test_function(int dim, double c = 1.0);

}  // namespace renorm
