#include "renorm/cyl_approx.hpp"

#include "renorm/optimizer.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>

namespace renorm {

Projection::Projection(int ambient_dim, int retained_dim) : ambient(ambient_dim), retained(retained_dim) {
  if (ambient < 1 || retained < 0 || retained > ambient) throw std::invalid_argument("bad projection dimensions");
}

Matrix Projection::matrix() const {
  Matrix p = Matrix::Zero(ambient, ambient);
  for (int i = 0; i < retained; ++i) p(i, i) = 1.0;
  return p;
}

Point Projection::project(const Point& x) const {
  Point y = Point::Zero(ambient);
  y.head(retained) = x.head(retained);
  return y;
}

namespace {

constexpr double kTailCut = 10.0;

// Tail integration data shared by the pieces of b^N.
struct TailAverager {
  BVField b;
  Projection proj;
  std::vector<std::size_t> retained_ifaces;
  std::optional<std::size_t> mixed;
  Vector nu_head, nu_tail_unit;  // mixed interface: head part, unit tail direction
  double nu_tail_norm = 0.0, offset = 0.0;
  Matrix tail_complement;  // tail coordinates orthogonal to nu_tail_unit (columns)
  PointRule tail_rule;     // over the tail (no mixed interface) or its complement

  TailAverager(const BVField& field, const Projection& p, const GaussianSpace& space) : b(field), proj(p) {
    if (b.dim() != proj.ambient) throw std::invalid_argument("cylindrical_approx: dimension mismatch");
    const int k = proj.tail();
    for (std::size_t i = 0; i < b.interfaces().size(); ++i) {
      const Interface& iface = b.interfaces()[i];
      const double tail_norm = k > 0 ? iface.normal.tail(k).norm() : 0.0;
      if (tail_norm <= 1e-14 * iface.normal.norm()) {
        retained_ifaces.push_back(i);
        continue;
      }
      if (mixed) throw std::invalid_argument("cylindrical_approx: at most one interface may leave the retained coordinates");
      mixed = i;
      nu_head = iface.normal.head(proj.retained);
      nu_tail_norm = tail_norm;
      nu_tail_unit = iface.normal.tail(k) / tail_norm;
      offset = iface.offset;
    }
    if (mixed) {
      tail_complement = complement_basis(nu_tail_unit);
      tail_rule = k > 1 ? tensor_hermite_rule(k - 1, space.quad_order()) : PointRule{{Point::Zero(0)}, {1.0}};
    } else {
      tail_rule = k > 0 ? tensor_hermite_rule(k, space.quad_order()) : PointRule{{Point::Zero(0)}, {1.0}};
    }
  }

  // Threshold of the mixed interface along the unit tail direction.
  double tau(const Point& x) const { return (offset - nu_head.dot(x.head(proj.retained))) / nu_tail_norm; }

  // Rule on one side of tau for N(0,1), rescaled to the exact side mass.
  static Rule1D side_rule(double t, bool above) {
    double lo, hi;
    if (above) {
      lo = std::max(t, -kTailCut);
      hi = std::max(lo, 0.0) + kTailCut;
    } else {
      hi = std::min(t, kTailCut);
      lo = std::min(hi, 0.0) - kTailCut;
    }
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / 2.5)));
    Rule1D r = composite_gauss_legendre(lo, hi, panels, 8);
    double mass = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
      r.weights[i] *= normal_pdf(r.nodes[i]);
      mass += r.weights[i];
    }
    const double exact = above ? normal_cdf(-t) : normal_cdf(t);
    for (double& w : r.weights) w = mass > 0.0 ? w * exact / mass : 0.0;
    return r;
  }

  Point assemble(const Point& x, const Point& tail) const {
    Point z(proj.ambient);
    z.head(proj.retained) = x.head(proj.retained);
    z.tail(proj.tail()) = tail;
    return z;
  }

  // Visits every tail node: fn(point, weight, side) with side = +1 above the
  // mixed interface, -1 below, 0 without one.
  template <class Fn>
  void visit(const Point& x, Fn&& fn) const {
    const int k = proj.tail();
    if (!mixed) {
      for (std::size_t j = 0; j < tail_rule.size(); ++j)
        fn(assemble(x, tail_rule.points[j]), tail_rule.weights[j], 0);
      return;
    }
    const double t = tau(x);
    for (int side : {1, -1}) {
      const Rule1D sr = side_rule(t, side > 0);
      for (std::size_t i = 0; i < sr.nodes.size(); ++i) {
        if (sr.weights[i] == 0.0) continue;
        for (std::size_t j = 0; j < tail_rule.size(); ++j) {
          Vector tail = sr.nodes[i] * nu_tail_unit;
          if (k > 1) tail += tail_complement * tail_rule.points[j];
          fn(assemble(x, tail), sr.weights[i] * tail_rule.weights[j], side);
        }
      }
    }
  }

  // Piece of b active for the retained bits of `piece` (pattern over retained
  // interfaces) and the given side of the mixed interface.
  std::size_t piece_index(unsigned piece, int side) const {
    unsigned idx = 0;
    for (std::size_t r = 0; r < retained_ifaces.size(); ++r)
      if (piece & (1u << r)) idx |= 1u << retained_ifaces[r];
    if (mixed && side > 0) idx |= 1u << *mixed;
    return idx;
  }

  Vector value(unsigned piece, const Point& x) const {
    Vector acc = Vector::Zero(proj.ambient);
    visit(x, [&](const Point& z, double w, int side) { acc += w * b.pieces()[piece_index(piece, side)].eval(z); });
    acc.tail(proj.tail()).setZero();
    return acc;
  }

  Matrix jacobian(unsigned piece, const Point& x) const {
    const int n = proj.retained;
    Matrix acc = Matrix::Zero(proj.ambient, proj.ambient);
    visit(x, [&](const Point& z, double w, int side) {
      acc.topLeftCorner(n, n) += w * b.pieces()[piece_index(piece, side)].jacobian(z).topLeftCorner(n, n);
    });
    if (mixed) {
      // d/dx_j of the split average: phi(tau) E_w[[b]] (x) nu_head / |nu_tail|
      const double t = tau(x);
      const double dens = normal_pdf(t);
      if (dens > 0.0) {
        Vector jump = Vector::Zero(proj.ambient);
        const std::size_t up = piece_index(piece, 1), down = piece_index(piece, -1);
        for (std::size_t j = 0; j < tail_rule.size(); ++j) {
          Vector tail = t * nu_tail_unit;
          if (proj.tail() > 1) tail += tail_complement * tail_rule.points[j];
          const Point z = assemble(x, tail);
          jump += tail_rule.weights[j] * (b.pieces()[up].eval(z) - b.pieces()[down].eval(z));
        }
        acc.topLeftCorner(n, n) += dens * jump.head(n) * nu_head.transpose() / nu_tail_norm;
      }
    }
    return acc;
  }

  double expectation(const ScalarFn& f, const Point& x) const {
    double acc = 0.0;
    visit(x, [&](const Point& z, double w, int) { acc += w * f(z); });
    return acc;
  }
};

double lp_norm(const GaussianSpace& space, const std::function<Vector(const Point&)>& v, double p) {
  return std::pow(expect(space, [&](const Point& x) { return std::pow(v(x).norm(), p); }).value, 1.0 / p);
}

}  // namespace

BVField cylindrical_approx(const BVField& b, const Projection& proj, const GaussianSpace& space) {
  auto avg = std::make_shared<const TailAverager>(b, proj, space);
  std::vector<Interface> ifaces;
  for (std::size_t i : avg->retained_ifaces) {
    Interface iface = b.interfaces()[i];
    iface.declared_jump = nullptr;
    ifaces.push_back(std::move(iface));
  }
  const unsigned count = 1u << ifaces.size();
  std::vector<SmoothField> pieces;
  for (unsigned p = 0; p < count; ++p) {
    SmoothField f;
    f.dim = proj.ambient;
    f.name = b.name() + "^N";
    f.eval = [avg, p](const Point& x) { return avg->value(p, x); };
    f.jacobian = [avg, p](const Point& x) { return avg->jacobian(p, x); };
    pieces.push_back(std::move(f));
  }
  return BVField(proj.ambient, std::move(ifaces), std::move(pieces), b.name() + "^" + std::to_string(proj.retained));
}

double conditional_expectation(const BVField& b, const Projection& proj, const ScalarFn& f, const Point& x,
                               const GaussianSpace& space) {
  return TailAverager(b, proj, space).expectation(f, x);
}

DivergenceIdentityReport divergence_identity_check(const BVField& b, const Projection& proj,
                                                   const GaussianSpace& space) {
  if (max_normal_jump(b, space) > 1e-12)
    throw std::invalid_argument("divergence_identity_check: div b has a singular part");
  const TailAverager avg(b, proj, space);
  const BVField bn = cylindrical_approx(b, proj, space);
  DivergenceIdentityReport rep;
  rep.gap_l1 = expect(space, [&](const Point& x) {
    const double lhs = bn.gauss_divergence_ac(x);
    const double rhs = avg.expectation([&](const Point& z) { return b.gauss_divergence_ac(z); }, x);
    return std::abs(lhs - rhs);
  });
  rep.tolerance = rep.gap_l1.method == Method::monte_carlo ? 4.0 * rep.gap_l1.std_error + 1e-12 : 1e-6;
  rep.pass = rep.gap_l1.value < rep.tolerance;
  return rep;
}

std::vector<HomogeneousConvex> convex_battery(const Mollifier& rho, const GaussianSpace& space) {
  std::vector<HomogeneousConvex> out;
  out.push_back({"hs_norm", [](const Point&, const Matrix& a) { return a.norm(); }});
  out.push_back({"operator_norm", [](const Point&, const Matrix& a) {
                   return a.size() == 0 ? 0.0 : Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
                 }});
  const GaussianSpace sp = space.with_dim(rho.dim);
  out.push_back({"lambda_rho:" + rho.name, [rho, sp](const Point&, const Matrix& a) {
                   if (a.norm() == 0.0) return 0.0;
                   return objective_unchecked(rho, HSMatrix(a), sp).value;
                 }});
  return out;
}

TvContractionReport tv_contraction_check(const BVField& b, const Projection& proj,
                                         const std::vector<HomogeneousConvex>& fs, const GaussianSpace& space,
                                         double tol) {
  const BVField bn = cylindrical_approx(b, proj, space);
  const DerivativeMeasure dm = derivative_measure(b, space);
  const DerivativeMeasure dmn = derivative_measure(bn, space);
  const Matrix p = proj.matrix();
  TvContractionReport rep;
  rep.tv = total_variation(dm);
  rep.tv_n = total_variation(dmn);
  rep.pass = true;
  for (const auto& f : fs) {
    TvContractionRow row;
    row.f = f.name;
    row.lhs = integrate_against_tv(dmn, [&](const Point& x, const Matrix& m) { return f.f(x, m); });
    row.rhs = integrate_against_tv(dm, [&](const Point& x, const Matrix& m) { return f.f(x, p * m * p); });
    row.pass = row.lhs.value <= row.rhs.value + tol + 4.0 * std::hypot(row.lhs.std_error, row.rhs.std_error);
    rep.pass = rep.pass && row.pass;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

std::vector<CylStudyRow> cyl_study(const BVField& b, const GaussianSpace& space, const Mollifier& rho) {
  const auto fs = convex_battery(rho, space);
  const bool divergence_ok = max_normal_jump(b, space) <= 1e-12;
  std::vector<CylStudyRow> rows;
  for (int n = 1; n <= b.dim(); ++n) {
    const Projection proj(b.dim(), n);
    const BVField bn = cylindrical_approx(b, proj, space);
    CylStudyRow row;
    row.retained = n;
    row.l1_gap = expect(space, [&](const Point& x) {
                   return (eval_field(bn, x).value - eval_field(b, x).value).norm();
                 }).value;
    if (divergence_ok) {
      row.div_gap = expect(space, [&](const Point& x) {
                      return std::abs(bn.gauss_divergence_ac(x) - b.gauss_divergence_ac(x));
                    }).value;
      row.identity_gap = divergence_identity_check(b, proj, space).gap_l1.value;
    } else {
      row.div_gap = row.identity_gap = std::numeric_limits<double>::quiet_NaN();
    }
    const TvContractionReport tvr = tv_contraction_check(b, proj, fs, space);
    row.tv_n = tvr.tv_n;
    row.tv = tvr.tv;
    row.jensen_pass = tvr.pass;
    row.lp_contraction = true;
    for (double p : {1.0, 2.0, 4.0}) {
      const double nb = lp_norm(space, [&](const Point& x) { return eval_field(b, x).value; }, p);
      const double nn = lp_norm(space, [&](const Point& x) { return eval_field(bn, x).value; }, p);
      row.lp_contraction = row.lp_contraction && nn <= nb + 1e-9;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace renorm
