#pragma once

// Driving fields b: smooth fields with exact Jacobians, piecewise-smooth (BV)
// fields with hyperplane interfaces, their derivative measures Db and the
// renormalization functions beta.

#include "renorm/gauss_core.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace renorm {

/// Smooth H-valued field on R^N. jacobian(x)(i,j) = d b_i / d x_j.
struct SmoothField {
  int dim = 0;
  std::string name;
  std::function<Vector(const Point&)> eval;
  std::function<Matrix(const Point&)> jacobian;

  double euclid_div(const Point& x) const { return jacobian(x).trace(); }

  static SmoothField zero(int dim);
  static SmoothField constant(const Vector& h);
  static SmoothField linear(const Matrix& m);
  /// One expression per component, in variables x1..xN.
  static SmoothField from_expressions(const std::vector<std::string>& components);
};

/// Largest relative discrepancy between the Jacobian and central differences
/// (step h) over `count` Gaussian sample points.
double jacobian_fd_error(const SmoothField& b, const GaussianSpace& space, int count = 20,
                         double h = 1e-5);

/// Hyperplane {<normal, x> = offset} carrying a jump of the field.
struct Interface {
  Vector normal;
  double offset = 0.0;
  /// Optional declared jump [b] = b(above) - b(below); checked against the pieces.
  std::function<Vector(const Point&)> declared_jump;
};

/// Piecewise-smooth field. Piece k is active on the cell whose sign pattern is
/// k: bit i set iff <normal_i, x> >= offset_i.
class BVField {
 public:
  BVField() = default;
  BVField(int dim, std::vector<Interface> interfaces, std::vector<SmoothField> pieces,
          std::string name = "bv");

  static BVField smooth(SmoothField f);
  static BVField two_sided(const Vector& normal, double offset, SmoothField below, SmoothField above,
                           std::string name = "bv");

  int dim() const { return dim_; }
  const std::string& name() const { return name_; }
  bool is_smooth() const { return interfaces_.empty(); }
  const std::vector<Interface>& interfaces() const { return interfaces_; }
  const std::vector<SmoothField>& pieces() const { return pieces_; }

  /// Sign pattern of x; sets *on_interface when x lies on some hyperplane.
  unsigned pattern(const Point& x, bool* on_interface = nullptr) const;
  const SmoothField& active_piece(const Point& x) const { return pieces_[pattern(x)]; }

  /// [b](x) across interface i: piece above minus piece below, other bits from x.
  Vector jump(std::size_t i, const Point& x) const;
  /// Absolutely continuous Gaussian divergence of the active piece.
  double gauss_divergence_ac(const Point& x) const;

 private:
  int dim_ = 0;
  std::vector<Interface> interfaces_;
  std::vector<SmoothField> pieces_;
  std::string name_;
};

struct FieldValue {
  Vector value;
  bool on_interface = false;
};

Vector eval_field(const SmoothField& b, const Point& x);
/// On an interface the piece on the <normal,x> > offset side is used and flagged.
FieldValue eval_field(const BVField& b, const Point& x);

/// div_gamma b(x) = tr Db(x) - <b(x), x>
double gauss_divergence(const SmoothField& b, const Point& x);
double gauss_divergence(const BVField& b, const Point& x);

/// Max |<[b], normal>| over sampled interface points; zero means the
/// distributional divergence has no singular part.
double max_normal_jump(const BVField& b, const GaussianSpace& space, int count = 64);
/// Max discrepancy between declared jumps and piece differences.
double max_declared_jump_error(const BVField& b, const GaussianSpace& space, int count = 64);

// ---------------------------------------------------------------------------
// Gaussian surface measure on hyperplanes
// ---------------------------------------------------------------------------

/// Orthonormal basis (columns) of the complement of `normal`.
Matrix complement_basis(const Vector& normal);

/// Integral of g against the Gaussian surface measure of {<nu,x> = c}:
/// phi_1(c) * E g(c nu + W z), z ~ gamma_{N-1}.
Estimate hyperplane_expect(const Vector& normal, double offset, const GaussianSpace& space,
                           const ScalarFn& g);

// ---------------------------------------------------------------------------
// Derivative measure
// ---------------------------------------------------------------------------

struct JumpPart {
  std::size_t interface_index = 0;
  Interface iface;
  /// x -> [b](x) (x) nu, for x on the hyperplane
  std::function<Matrix(const Point&)> density;
};

struct DerivativeMeasure {
  BVField field;
  std::function<Matrix(const Point&)> ac_density;
  std::vector<JumpPart> jump_parts;
  double tv_ac = 0.0;
  double tv_jump = 0.0;
  GaussianSpace space{1};
};

DerivativeMeasure derivative_measure(const BVField& b, const GaussianSpace& space);

/// Location selector for polar_part: the absolutely continuous part or a jump part.
struct PolarWhere {
  static constexpr int ac = -1;
  int part = ac;
};

/// Unit-HS-norm density of Db with respect to |Db| at x.
Matrix polar_part(const DerivativeMeasure& dm, const Point& x, PolarWhere where = {});

double total_variation(const DerivativeMeasure& dm);

/// Integral of F(x, M) against |Db| with M = Db/|Db| the polar part.
/// Points where the density vanishes carry no mass and are skipped.
Estimate integrate_against_tv(const DerivativeMeasure& dm,
                              const std::function<double(const Point&, const Matrix&)>& F);

// ---------------------------------------------------------------------------
// Time-dependent fields, piecewise constant in t
// ---------------------------------------------------------------------------

struct TimeSlicedField {
  std::vector<double> breakpoints;  // t_0 < t_1 < ... < t_k
  std::vector<BVField> slices;      // slice j active on [t_j, t_{j+1})

  const BVField& at(double t) const;
  /// |Db|((0,T) x X) = sum_j (t_{j+1} - t_j) |Db_j|(X)
  double total_variation(const GaussianSpace& space) const;
};

// ---------------------------------------------------------------------------
// Renormalization functions
// ---------------------------------------------------------------------------

struct RenormFunction {
  std::string name;
  std::function<double(double)> beta;
  std::function<double(double)> beta_prime;
  double sup_beta_prime = 1.0;
  double sup_defect = 1.0;  // sup |beta(z) - z beta'(z)|
};

RenormFunction arctan_renorm();
RenormFunction algebraic_renorm();  // z / sqrt(1+z^2)

/// Checks the declared sup bounds on a dense sample of [-1e6, 1e6].
bool check_renorm_bounds(const RenormFunction& beta, int samples = 200001);

}  // namespace renorm
