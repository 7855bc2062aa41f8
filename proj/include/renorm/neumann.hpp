#pragma once

// Gaussian-weighted Neumann problem  -div_gamma grad eta + lambda eta = f  on a
// convex domain, P1 finite elements, and the global field b = (grad eta) chi_Omega.

#include "renorm/fields.hpp"

#include <array>
#include <memory>
#include <string>
#include <vector>

namespace renorm {

/// Boundary facet: an end point in 1D, an edge in 2D (second node -1 in 1D).
struct Facet {
  std::array<int, 2> nodes{-1, -1};
  int element = -1;
  Vector normal;  // outward unit normal
};

struct Mesh {
  int dim = 1;
  std::vector<Point> nodes;
  std::vector<std::array<int, 3>> elements;  // 1D uses the first two entries
  std::vector<Facet> boundary;

  int vertices_per_element() const { return dim + 1; }
  double h() const;  // largest element diameter
};

enum class DomainShape { interval, polygon, disk };

struct Domain {
  int dim = 1;
  DomainShape shape = DomainShape::interval;
  std::string description;
  Mesh mesh;
  double radius = 0.0;  // disk only

  static Domain interval(double a, double b, int elements);
  /// Convex polygon from counter-clockwise vertices, fan-triangulated from the centroid.
  static Domain polygon(const std::vector<Point>& vertices);
  /// Regular inscribed polygon with `segments` sides; refinement moves new
  /// boundary nodes onto the circle, so the domain stays convex.
  static Domain disk(double radius, int segments);

  /// Uniform refinement: bisection in 1D, red refinement in 2D.
  Domain refined() const;
  bool contains(const Point& x, double tol = 1e-12) const;
};

/// Gauss-Legendre points per direction in element integrals.
inline constexpr int kElementQuadrature = 6;

class PointLocator;

struct EllipticSolution {
  std::shared_ptr<const Domain> domain;
  double lambda = 1.0;
  ScalarFn f;
  Vector eta;                    // nodal values
  std::vector<Vector> grad_eta;  // one per element
  double energy = 0.0;           // int_Omega |grad eta|^2 + lambda eta^2 dgamma
  double f_l2sq = 0.0;           // int_Omega f^2 dgamma
  double discrete_residual = 0.0;
  std::shared_ptr<const PointLocator> locator;

  /// Element containing x, or the nearest one when x is outside.
  int locate(const Point& x) const;
  /// P1 interpolant, extended linearly from the nearest element outside Omega.
  double value(const Point& x) const;
  /// Lax-Milgram a priori bound energy <= f_l2sq / lambda.
  bool energy_bound_holds() const { return energy <= f_l2sq / lambda * (1 + 1e-12) + 1e-300; }
};

/// Galerkin solution of  int <grad phi, grad eta> + lambda phi eta dgamma = int f phi dgamma.
/// Throws std::invalid_argument for lambda <= 0 and std::runtime_error if the
/// factorization fails.
EllipticSolution solve_neumann(const Domain& dom, double lambda, const ScalarFn& f);

struct BoundaryTrace {
  Point midpoint;
  Vector normal;
  double mass = 0.0;  // Gaussian surface measure of the facet
  Vector trace;       // grad eta from inside (constant on the facet)
};

/// b = (grad eta) chi_Omega.
struct ExtendedField {
  std::shared_ptr<const EllipticSolution> sol;
  std::vector<BoundaryTrace> boundary;
  double tv_jump = 0.0;          // int_{dOmega} |trace| dgamma_{d-1}
  double normal_trace_l1 = 0.0;  // int_{dOmega} |<trace, sigma>| dgamma_{d-1}

  Vector value(const Point& x) const;
  /// Hyperplane-interface form, one interface per facet. The pieces are
  /// elementwise gradients with zero Jacobian, so interior element jumps are
  /// not part of Db. Needs at most 12 facets.
  BVField bv_field() const;
};

ExtendedField extended_field(const EllipticSolution& sol);

struct WeakDivRow {
  std::string phi;
  double lhs = 0.0;  // int <grad phi, b> dgamma
  double rhs = 0.0;  // int_Omega (f - lambda eta) phi dgamma
  double residual = 0.0;
};

struct WeakDivReport {
  double h = 0.0;
  std::vector<WeakDivRow> rows;
  double max_residual = 0.0;
  double tolerance = 1e-3;
  bool pass = false;
};

/// div_gamma b = (lambda eta - f) chi_Omega tested against smooth global phi.
WeakDivReport weak_div_check(const ExtendedField& b, const std::vector<TestFunction>& phis,
                             double tolerance = 1e-3);

struct ComparisonReport {
  double lambda_max_eta = 0.0, lambda_min_eta = 0.0;
  double f_max = 0.0, f_min = 0.0;
  double tolerance = 0.0;  // h^2 osc(f) + 1e-10
  bool pass = false;
};

/// lambda max eta <= max f + tol and lambda min eta >= min f - tol.
ComparisonReport comparison_check(const EllipticSolution& sol);

/// ||eta_coarse - eta_fine||_{L^2(Omega_fine, gamma)}.
double l2_difference(const EllipticSolution& coarse, const EllipticSolution& fine);

struct RefinementLevel {
  int level = 0;
  int elements = 0;
  double h = 0.0;
  double weak_residual = 0.0;
  double l2_to_next = 0.0;  // NaN on the finest level
  double tv_jump = 0.0;
  double normal_trace_l1 = 0.0;
  double energy = 0.0;
  double energy_bound = 0.0;
  double lambda_max_eta = 0.0;
  double lambda_min_eta = 0.0;
  bool comparison_pass = false;
  double discrete_residual = 0.0;
};

struct RefinementStudy {
  std::vector<RefinementLevel> levels;
  double residual_order = 0.0;  // least-squares slope of log residual against log h
  double l2_order = 0.0;
  double normal_trace_order = 0.0;
};

RefinementStudy refinement_study(const Domain& coarse, double lambda, const ScalarFn& f, int refinements,
                                 const std::vector<TestFunction>& phis);

/// Least-squares slope of log y against log x over the positive finite pairs; NaN if fewer than two.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace renorm
