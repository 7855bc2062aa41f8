#pragma once

// Cylindrical approximation b^N = E_N[pi_N b]: keep the first N coordinates,
// average the field over the discarded ones and drop its discarded components.

#include "renorm/fields.hpp"
#include "renorm/mollifier.hpp"

#include <functional>
#include <string>
#include <vector>

namespace renorm {

/// Coordinate projection onto the first `retained` of `ambient` coordinates.
/// Other orthogonal projections are handled by rotating the field first.
struct Projection {
  int ambient = 1;
  int retained = 1;

  Projection(int ambient_dim, int retained_dim);
  Matrix matrix() const;  // pi_N as an ambient x ambient matrix
  Point project(const Point& x) const;
  int tail() const { return ambient - retained; }
};

/// b^N as a field on the ambient space, constant in the discarded coordinates.
/// Interfaces with normals inside the retained coordinates stay interfaces; at
/// most one interface may have a normal with a discarded component, and its
/// jump becomes part of the absolutely continuous Jacobian of b^N.
/// The tail average is split at that interface; both halves use Gauss-Legendre
/// rules rescaled to the exact normal masses Phi(tau), 1 - Phi(tau), so
/// piecewise-constant data get the error-function closed form.
BVField cylindrical_approx(const BVField& b, const Projection& proj, const GaussianSpace& space);

/// E_N[f](x): f averaged over the discarded coordinates, split at b's mixed interface.
double conditional_expectation(const BVField& b, const Projection& proj, const ScalarFn& f, const Point& x,
                               const GaussianSpace& space);

struct DivergenceIdentityReport {
  Estimate gap_l1;  // || div_gamma b^N - E_N[div_gamma b] ||_{L^1}
  double tolerance = 1e-6;
  bool pass = false;
};

/// div_gamma b^N = E_N[div_gamma b]; b must have no normal jumps.
DivergenceIdentityReport divergence_identity_check(const BVField& b, const Projection& proj,
                                                   const GaussianSpace& space);

/// Positively homogeneous in the matrix argument and convex; x is the base point.
struct HomogeneousConvex {
  std::string name;
  std::function<double(const Point&, const Matrix&)> f;
};

/// HS norm, operator norm and the Lambda_rho integrand A -> J(rho, A).
std::vector<HomogeneousConvex> convex_battery(const Mollifier& rho, const GaussianSpace& space);

struct TvContractionRow {
  std::string f;
  Estimate lhs;  // int f(x, Db^N/|Db^N|) d|Db^N|
  Estimate rhs;  // int f(x, pi_N (Db/|Db|) pi_N) d|Db|
  bool pass = false;
};

struct TvContractionReport {
  double tv_n = 0.0;
  double tv = 0.0;
  std::vector<TvContractionRow> rows;
  bool pass = false;
};

TvContractionReport tv_contraction_check(const BVField& b, const Projection& proj,
                                         const std::vector<HomogeneousConvex>& fs, const GaussianSpace& space,
                                         double tol = 1e-6);

struct CylStudyRow {
  int retained = 0;
  double l1_gap = 0.0;    // ||b^N - b||_1
  double div_gap = 0.0;   // ||div b^N - div b||_1
  double identity_gap = 0.0;  // divergence identity
  double tv_n = 0.0;
  double tv = 0.0;
  bool jensen_pass = false;
  bool lp_contraction = false;  // ||b^N||_p <= ||b||_p, p in {1, 2, 4}
};

/// One row per N = 1..ambient.
std::vector<CylStudyRow> cyl_study(const BVField& b, const GaussianSpace& space, const Mollifier& rho);

}  // namespace renorm
