#include "renorm/fields.hpp"

#include "renorm/expression.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace renorm {

SmoothField SmoothField::zero(int dim) {
  SmoothField f;
  f.dim = dim;
  f.name = "zero";
  f.eval = [dim](const Point&) { return Vector::Zero(dim).eval(); };
  f.jacobian = [dim](const Point&) { return Matrix::Zero(dim, dim).eval(); };
  return f;
}

SmoothField SmoothField::constant(const Vector& h) {
  SmoothField f;
  f.dim = static_cast<int>(h.size());
  f.name = "constant";
  f.eval = [h](const Point&) { return h; };
  const int n = f.dim;
  f.jacobian = [n](const Point&) { return Matrix::Zero(n, n).eval(); };
  return f;
}

SmoothField SmoothField::linear(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("linear field needs a square matrix");
  SmoothField f;
  f.dim = static_cast<int>(m.rows());
  f.name = "linear";
  f.eval = [m](const Point& x) { return (m * x).eval(); };
  f.jacobian = [m](const Point&) { return m; };
  return f;
}

SmoothField SmoothField::from_expressions(const std::vector<std::string>& components) {
  const int n = static_cast<int>(components.size());
  if (n < 1) throw std::invalid_argument("expression field needs at least one component");
  std::vector<Expression> exprs;
  exprs.reserve(components.size());
  for (const auto& c : components) exprs.push_back(Expression::parse(c, n));
  SmoothField f;
  f.dim = n;
  f.name = "expression";
  f.eval = [exprs, n](const Point& x) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = exprs[i].eval(x);
    return v;
  };
  f.jacobian = [exprs, n](const Point& x) {
    Matrix j(n, n);
    Vector g;
    for (int i = 0; i < n; ++i) {
      exprs[i].eval_grad(x, g);
      j.row(i) = g.transpose();
    }
    return j;
  };
  return f;
}

double jacobian_fd_error(const SmoothField& b, const GaussianSpace& space, int count, double h) {
  const auto pts = sample_gaussian(space.with_dim(b.dim), count, 911);
  double worst = 0.0;
  for (const auto& x : pts) {
    const Matrix j = b.jacobian(x);
    Matrix fd(b.dim, b.dim);
    for (int k = 0; k < b.dim; ++k) {
      Point xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      fd.col(k) = (b.eval(xp) - b.eval(xm)) / (2 * h);
    }
    const double scale = std::max(1.0, j.cwiseAbs().maxCoeff());
    worst = std::max(worst, (j - fd).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------

BVField::BVField(int dim, std::vector<Interface> interfaces, std::vector<SmoothField> pieces,
                 std::string name)
    : dim_(dim), interfaces_(std::move(interfaces)), pieces_(std::move(pieces)), name_(std::move(name)) {
  if (dim_ < 1) throw std::invalid_argument("field dimension must be positive");
  if (interfaces_.size() > 16) throw std::invalid_argument("at most 16 interfaces");
  if (pieces_.size() != (std::size_t{1} << interfaces_.size()))
    throw std::invalid_argument("need 2^k pieces for k interfaces");
  for (auto& iface : interfaces_) {
    if (iface.normal.size() != dim_) throw std::invalid_argument("interface normal has wrong length");
    const double n = iface.normal.norm();
    if (n == 0.0) throw std::invalid_argument("interface normal is zero");
    if (std::abs(n - 1.0) > 1e-12) {
      iface.normal /= n;
      iface.offset /= n;
    }
  }
  for (const auto& p : pieces_)
    if (p.dim != dim_) throw std::invalid_argument("piece dimension mismatch");
}

BVField BVField::smooth(SmoothField f) {
  const int dim = f.dim;
  std::string name = f.name;
  return BVField(dim, {}, {std::move(f)}, std::move(name));
}

BVField BVField::two_sided(const Vector& normal, double offset, SmoothField below, SmoothField above,
                           std::string name) {
  Interface iface{normal, offset, {}};
  const int dim = static_cast<int>(normal.size());
  return BVField(dim, {iface}, {std::move(below), std::move(above)}, std::move(name));
}

unsigned BVField::pattern(const Point& x, bool* on_interface) const {
  unsigned mask = 0;
  bool hit = false;
  for (std::size_t i = 0; i < interfaces_.size(); ++i) {
    const double d = interfaces_[i].normal.dot(x) - interfaces_[i].offset;
    if (d >= 0.0) mask |= 1u << i;
    if (d == 0.0) hit = true;
  }
  if (on_interface) *on_interface = hit;
  return mask;
}

Vector BVField::jump(std::size_t i, const Point& x) const {
  const unsigned mask = pattern(x);
  const unsigned bit = 1u << i;
  return pieces_[mask | bit].eval(x) - pieces_[mask & ~bit].eval(x);
}

double BVField::gauss_divergence_ac(const Point& x) const {
  const SmoothField& p = active_piece(x);
  return p.euclid_div(x) - p.eval(x).dot(x);
}

Vector eval_field(const SmoothField& b, const Point& x) { return b.eval(x); }

FieldValue eval_field(const BVField& b, const Point& x) {
  FieldValue v;
  const unsigned mask = b.pattern(x, &v.on_interface);
  v.value = b.pieces()[mask].eval(x);
  return v;
}

double gauss_divergence(const SmoothField& b, const Point& x) { return b.euclid_div(x) - b.eval(x).dot(x); }
double gauss_divergence(const BVField& b, const Point& x) { return b.gauss_divergence_ac(x); }

namespace {

std::vector<Point> interface_samples(const Interface& iface, int dim, const GaussianSpace& space, int count,
                                     std::uint64_t stream) {
  std::vector<Point> out;
  const Matrix w = complement_basis(iface.normal);
  if (dim == 1) {
    out.push_back(iface.offset * iface.normal);
    return out;
  }
  for (const auto& z : sample_gaussian(space.with_dim(dim - 1), count, stream))
    out.push_back(iface.offset * iface.normal + w * z);
  return out;
}

}  // namespace

double max_normal_jump(const BVField& b, const GaussianSpace& space, int count) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.interfaces().size(); ++i) {
    const auto& iface = b.interfaces()[i];
    for (const auto& x : interface_samples(iface, b.dim(), space, count, 300 + i))
      worst = std::max(worst, std::abs(b.jump(i, x).dot(iface.normal)));
  }
  return worst;
}

double max_declared_jump_error(const BVField& b, const GaussianSpace& space, int count) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.interfaces().size(); ++i) {
    const auto& iface = b.interfaces()[i];
    if (!iface.declared_jump) continue;
    for (const auto& x : interface_samples(iface, b.dim(), space, count, 400 + i))
      worst = std::max(worst, (b.jump(i, x) - iface.declared_jump(x)).cwiseAbs().maxCoeff());
  }
  return worst;
}

// ---------------------------------------------------------------------------

Matrix complement_basis(const Vector& normal) {
  const int n = static_cast<int>(normal.size());
  if (n == 1) return Matrix(1, 0);
  Eigen::HouseholderQR<Matrix> qr(normal / normal.norm());
  const Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  return q.rightCols(n - 1);
}

Estimate hyperplane_expect(const Vector& normal, double offset, const GaussianSpace& space,
                           const ScalarFn& g) {
  const int n = static_cast<int>(normal.size());
  const double nn = normal.norm();
  const Vector nu = normal / nn;
  const double c = offset / nn;
  const Point base = c * nu;
  const double weight = normal_pdf(c);
  if (n == 1) {
    const double v = g(base);
    if (!std::isfinite(v)) throw NonFiniteError("non-finite surface integrand", base);
    return {weight * v, 0.0, Method::quadrature};
  }
  const Matrix w = complement_basis(nu);
  const GaussianSpace sub = space.with_dim(n - 1);
  const Estimate e = expect(sub, [&](const Point& z) { return g(base + w * z); });
  return weight * e;
}

// ---------------------------------------------------------------------------

DerivativeMeasure derivative_measure(const BVField& b, const GaussianSpace& space) {
  DerivativeMeasure dm;
  dm.field = b;
  dm.space = space.with_dim(b.dim());
  const BVField& f = dm.field;
  dm.ac_density = [f](const Point& x) { return f.active_piece(x).jacobian(x); };
  for (std::size_t i = 0; i < b.interfaces().size(); ++i) {
    JumpPart jp;
    jp.interface_index = i;
    jp.iface = b.interfaces()[i];
    const Vector nu = jp.iface.normal;
    jp.density = [f, i, nu](const Point& x) { return (f.jump(i, x) * nu.transpose()).eval(); };
    dm.jump_parts.push_back(std::move(jp));
  }
  const auto ac = expect(dm.space, [&](const Point& x) { return dm.ac_density(x).norm(); });
  dm.tv_ac = ac.value;
  for (const auto& jp : dm.jump_parts) {
    dm.tv_jump += hyperplane_expect(jp.iface.normal, jp.iface.offset, dm.space,
                                    [&](const Point& x) { return f.jump(jp.interface_index, x).norm(); })
                      .value;
  }
  if (!std::isfinite(dm.tv_ac) || !std::isfinite(dm.tv_jump))
    throw std::runtime_error("total variation is not finite");
  return dm;
}

Matrix polar_part(const DerivativeMeasure& dm, const Point& x, PolarWhere where) {
  Matrix d;
  if (where.part == PolarWhere::ac) {
    d = dm.ac_density(x);
  } else {
    if (where.part < 0 || where.part >= static_cast<int>(dm.jump_parts.size()))
      throw std::out_of_range("no such jump part");
    d = dm.jump_parts[where.part].density(x);
  }
  const double n = d.norm();
  if (!(n > 0.0)) throw std::domain_error("polar undefined: zero density");
  return d / n;
}

double total_variation(const DerivativeMeasure& dm) { return dm.tv_ac + dm.tv_jump; }

Estimate integrate_against_tv(const DerivativeMeasure& dm,
                              const std::function<double(const Point&, const Matrix&)>& F) {
  Estimate total = expect(dm.space, [&](const Point& x) {
    const Matrix d = dm.ac_density(x);
    const double n = d.norm();
    return n > 0.0 ? F(x, d / n) * n : 0.0;
  });
  for (const auto& jp : dm.jump_parts) {
    total = total + hyperplane_expect(jp.iface.normal, jp.iface.offset, dm.space, [&](const Point& x) {
              const Matrix d = jp.density(x);
              const double n = d.norm();
              return n > 0.0 ? F(x, d / n) * n : 0.0;
            });
  }
  return total;
}

// ---------------------------------------------------------------------------

const BVField& TimeSlicedField::at(double t) const {
  if (slices.empty() || breakpoints.size() != slices.size() + 1)
    throw std::logic_error("time-sliced field needs k slices and k+1 breakpoints");
  for (std::size_t j = 0; j + 1 < breakpoints.size(); ++j)
    if (t < breakpoints[j + 1]) return slices[j];
  return slices.back();
}

double TimeSlicedField::total_variation(const GaussianSpace& space) const {
  double tv = 0.0;
  for (std::size_t j = 0; j < slices.size(); ++j)
    tv += (breakpoints[j + 1] - breakpoints[j]) * renorm::total_variation(derivative_measure(slices[j], space));
  return tv;
}

// ---------------------------------------------------------------------------

RenormFunction arctan_renorm() {
  return {"arctan", [](double z) { return std::atan(z); }, [](double z) { return 1.0 / (1.0 + z * z); },
          1.0, std::numbers::pi / 2};
}

RenormFunction algebraic_renorm() {
  return {"algebraic", [](double z) { return z / std::sqrt(1.0 + z * z); },
          [](double z) { return std::pow(1.0 + z * z, -1.5); }, 1.0, 1.0};
}

bool check_renorm_bounds(const RenormFunction& beta, int samples) {
  const double tol = 1e-12;
  auto ok = [&](double z) {
    const double bp = beta.beta_prime(z);
    const double d = beta.beta(z) - z * bp;
    return std::abs(bp) <= beta.sup_beta_prime + tol && std::abs(d) <= beta.sup_defect + tol;
  };
  for (int i = 0; i < samples; ++i) {
    const double u = -1.0 + 2.0 * i / (samples - 1);
    // linear grid on [-1e6, 1e6] plus a log-spaced grid resolving |z| near 1
    if (!ok(1e6 * u)) return false;
    const double z = std::copysign(std::pow(10.0, -6.0 + 12.0 * std::abs(u)), u);
    if (!ok(z)) return false;
  }
  return true;
}

}  // namespace renorm
