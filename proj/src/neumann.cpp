#include "renorm/neumann.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>

namespace renorm {

namespace {

Point point2(double x, double y) {
  Point p(2);
  p << x, y;
  return p;
}

double cross(const Point& a, const Point& b) { return a[0] * b[1] - a[1] * b[0]; }

// Quadrature on one element with the Gaussian density folded into the weights.
struct ElementRule {
  std::vector<Point> points;
  std::vector<double> weights;
  std::vector<std::array<double, 3>> bary;
  double mass = 0.0;  // gamma(element)
};

ElementRule element_rule(const Mesh& m, std::size_t e) {
  const auto& el = m.elements[e];
  const Rule1D gl = gauss_legendre_rule(kElementQuadrature, 0.0, 1.0);
  ElementRule r;
  if (m.dim == 1) {
    const double x0 = m.nodes[el[0]][0], x1 = m.nodes[el[1]][0];
    for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
      const double t = gl.nodes[q];
      Point x(1);
      x[0] = x0 + t * (x1 - x0);
      r.points.push_back(x);
      r.weights.push_back(gl.weights[q] * std::abs(x1 - x0) * gauss_density(x));
      r.bary.push_back({1.0 - t, t, 0.0});
    }
  } else {
    const Point& p0 = m.nodes[el[0]];
    const Point e1 = m.nodes[el[1]] - p0, e2 = m.nodes[el[2]] - p0;
    const double jac = std::abs(cross(e1, e2));
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
      for (std::size_t j = 0; j < gl.nodes.size(); ++j) {
        // collapsed square -> triangle
        const double xi = gl.nodes[i], eta = gl.nodes[j] * (1.0 - xi);
        const Point x = p0 + xi * e1 + eta * e2;
        r.points.push_back(x);
        r.weights.push_back(gl.weights[i] * gl.weights[j] * (1.0 - xi) * jac * gauss_density(x));
        r.bary.push_back({1.0 - xi - eta, xi, eta});
      }
    }
  }
  for (double w : r.weights) r.mass += w;
  return r;
}

// Gradients of the barycentric basis functions (columns).
Matrix basis_gradients(const Mesh& m, std::size_t e) {
  const auto& el = m.elements[e];
  if (m.dim == 1) {
    const double len = m.nodes[el[1]][0] - m.nodes[el[0]][0];
    Matrix g(1, 2);
    g << -1.0 / len, 1.0 / len;
    return g;
  }
  const Point& p0 = m.nodes[el[0]];
  Matrix jt(2, 2);
  jt.col(0) = m.nodes[el[1]] - p0;
  jt.col(1) = m.nodes[el[2]] - p0;
  const Matrix inv = jt.inverse();  // rows: grad lambda_1, grad lambda_2
  Matrix g(2, 3);
  g.col(1) = inv.row(0).transpose();
  g.col(2) = inv.row(1).transpose();
  g.col(0) = -(g.col(1) + g.col(2));
  return g;
}

void build_boundary(Mesh& m) {
  m.boundary.clear();
  if (m.dim == 1) {
    Facet lo, hi;
    lo.nodes = {0, -1};
    lo.element = 0;
    lo.normal = Vector::Constant(1, -1.0);
    hi.nodes = {static_cast<int>(m.nodes.size()) - 1, -1};
    hi.element = static_cast<int>(m.elements.size()) - 1;
    hi.normal = Vector::Constant(1, 1.0);
    m.boundary = {lo, hi};
    return;
  }
  struct EdgeUse {
    int count = 0;
    int element = -1;
    std::array<int, 2> oriented{};
  };
  std::map<std::pair<int, int>, EdgeUse> edges;
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    const auto& el = m.elements[e];
    for (int k = 0; k < 3; ++k) {
      const int i = el[k], j = el[(k + 1) % 3];
      EdgeUse& u = edges[{std::min(i, j), std::max(i, j)}];
      ++u.count;
      u.element = static_cast<int>(e);
      u.oriented = {i, j};
    }
  }
  for (const auto& [key, u] : edges) {
    if (u.count != 1) continue;
    const Point d = m.nodes[u.oriented[1]] - m.nodes[u.oriented[0]];
    Facet f;
    f.nodes = u.oriented;
    f.element = u.element;
    f.normal = point2(d[1], -d[0]).normalized();  // counter-clockwise elements: outward
    m.boundary.push_back(f);
  }
}

Mesh interval_mesh(double a, double b, int elements) {
  Mesh m;
  m.dim = 1;
  for (int i = 0; i <= elements; ++i) {
    Point x(1);
    x[0] = a + (b - a) * i / elements;
    m.nodes.push_back(x);
  }
  for (int i = 0; i < elements; ++i) m.elements.push_back({i, i + 1, -1});
  build_boundary(m);
  return m;
}

}  // namespace

double Mesh::h() const {
  double h = 0.0;
  for (const auto& el : elements)
    for (int i = 0; i <= dim; ++i)
      for (int j = i + 1; j <= dim; ++j) h = std::max(h, (nodes[el[i]] - nodes[el[j]]).norm());
  return h;
}

Domain Domain::interval(double a, double b, int elements) {
  if (!(b > a) || elements < 1) throw std::invalid_argument("interval domain: need a < b and elements >= 1");
  Domain d;
  d.dim = 1;
  d.shape = DomainShape::interval;
  d.description = "interval";
  d.mesh = interval_mesh(a, b, elements);
  return d;
}

Domain Domain::polygon(const std::vector<Point>& vertices) {
  const std::size_t n = vertices.size();
  if (n < 3) throw std::invalid_argument("polygon domain: need at least three vertices");
  for (std::size_t i = 0; i < n; ++i) {
    if (vertices[i].size() != 2) throw std::invalid_argument("polygon domain: vertices must be 2D");
    const Point a = vertices[(i + 1) % n] - vertices[i], b = vertices[(i + 2) % n] - vertices[(i + 1) % n];
    if (cross(a, b) <= 0.0) throw std::invalid_argument("polygon domain: vertices must be convex and counter-clockwise");
  }
  Domain d;
  d.dim = 2;
  d.shape = DomainShape::polygon;
  d.description = "polygon";
  Point c = Point::Zero(2);
  for (const auto& v : vertices) c += v;
  c /= static_cast<double>(n);
  d.mesh.dim = 2;
  d.mesh.nodes.push_back(c);
  for (const auto& v : vertices) d.mesh.nodes.push_back(v);
  for (std::size_t i = 0; i < n; ++i)
    d.mesh.elements.push_back({0, static_cast<int>(i + 1), static_cast<int>((i + 1) % n + 1)});
  build_boundary(d.mesh);
  return d;
}

Domain Domain::disk(double radius, int segments) {
  if (!(radius > 0.0) || segments < 3) throw std::invalid_argument("disk domain: need radius > 0 and segments >= 3");
  std::vector<Point> v;
  for (int i = 0; i < segments; ++i) {
    const double t = 2.0 * std::numbers::pi * i / segments;
    v.push_back(point2(radius * std::cos(t), radius * std::sin(t)));
  }
  Domain d = polygon(v);
  d.shape = DomainShape::disk;
  d.description = "disk";
  d.radius = radius;
  return d;
}

Domain Domain::refined() const {
  Domain d = *this;
  if (dim == 1) {
    d.mesh = interval_mesh(mesh.nodes.front()[0], mesh.nodes.back()[0], 2 * static_cast<int>(mesh.elements.size()));
    return d;
  }
  std::map<std::pair<int, int>, int> count;
  for (const auto& el : mesh.elements)
    for (int k = 0; k < 3; ++k) ++count[{std::min(el[k], el[(k + 1) % 3]), std::max(el[k], el[(k + 1) % 3])}];
  Mesh m;
  m.dim = 2;
  m.nodes = mesh.nodes;
  std::map<std::pair<int, int>, int> mid;
  auto midpoint = [&](int i, int j) {
    const std::pair<int, int> key{std::min(i, j), std::max(i, j)};
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    Point p = 0.5 * (m.nodes[i] + m.nodes[j]);
    if (shape == DomainShape::disk && count[key] == 1) p *= radius / p.norm();
    m.nodes.push_back(p);
    const int idx = static_cast<int>(m.nodes.size()) - 1;
    mid.emplace(key, idx);
    return idx;
  };
  for (const auto& el : mesh.elements) {
    const int a = el[0], b = el[1], c = el[2];
    const int ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
    m.elements.push_back({a, ab, ca});
    m.elements.push_back({ab, b, bc});
    m.elements.push_back({ca, bc, c});
    m.elements.push_back({ab, bc, ca});
  }
  build_boundary(m);
  d.mesh = std::move(m);
  return d;
}

bool Domain::contains(const Point& x, double tol) const {
  if (x.size() != dim) throw std::invalid_argument("Domain::contains: dimension mismatch");
  if (dim == 1) return x[0] >= mesh.nodes.front()[0] - tol && x[0] <= mesh.nodes.back()[0] + tol;
  for (const auto& f : mesh.boundary)
    if (f.normal.dot(x - mesh.nodes[f.nodes[0]]) > tol) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Point location
// ---------------------------------------------------------------------------

class PointLocator {
 public:
  explicit PointLocator(std::shared_ptr<const Domain> dom) : dom_(std::move(dom)) {
    const Mesh& m = dom_->mesh;
    if (m.dim == 1) return;
    lo_ = m.nodes[0];
    hi_ = m.nodes[0];
    for (const auto& p : m.nodes) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    cells_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(m.elements.size()))));
    buckets_.assign(static_cast<std::size_t>(cells_ * cells_), {});
    for (std::size_t e = 0; e < m.elements.size(); ++e) {
      Point blo = m.nodes[m.elements[e][0]], bhi = blo;
      for (int k = 1; k < 3; ++k) {
        blo = blo.cwiseMin(m.nodes[m.elements[e][k]]);
        bhi = bhi.cwiseMax(m.nodes[m.elements[e][k]]);
      }
      const auto [i0, j0] = cell(blo);
      const auto [i1, j1] = cell(bhi);
      for (int i = i0; i <= i1; ++i)
        for (int j = j0; j <= j1; ++j) buckets_[static_cast<std::size_t>(i * cells_ + j)].push_back(static_cast<int>(e));
    }
  }

  std::array<double, 3> barycentric(int e, const Point& x) const {
    const Mesh& m = dom_->mesh;
    const auto& el = m.elements[static_cast<std::size_t>(e)];
    if (m.dim == 1) {
      const double x0 = m.nodes[el[0]][0], x1 = m.nodes[el[1]][0];
      const double t = (x[0] - x0) / (x1 - x0);
      return {1.0 - t, t, 0.0};
    }
    const Point& p0 = m.nodes[el[0]];
    Matrix jt(2, 2);
    jt.col(0) = m.nodes[el[1]] - p0;
    jt.col(1) = m.nodes[el[2]] - p0;
    const Vector l = jt.inverse() * (x - p0);
    return {1.0 - l[0] - l[1], l[0], l[1]};
  }

  int locate(const Point& x) const {
    const Mesh& m = dom_->mesh;
    if (m.dim == 1) {
      const double x0 = m.nodes.front()[0], x1 = m.nodes.back()[0];
      const int n = static_cast<int>(m.elements.size());
      const int e = static_cast<int>(std::floor((x[0] - x0) / (x1 - x0) * n));
      return std::clamp(e, 0, n - 1);
    }
    const auto [i, j] = cell(x);
    int best = -1;
    double best_min = -std::numeric_limits<double>::infinity();
    for (int e : buckets_[static_cast<std::size_t>(i * cells_ + j)]) {
      const auto l = barycentric(e, x);
      const double mn = std::min({l[0], l[1], l[2]});
      if (mn >= -1e-12) return e;
      if (mn > best_min) {
        best_min = mn;
        best = e;
      }
    }
    // outside Omega: nearest centroid
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < m.elements.size(); ++e) {
      const Point c = (m.nodes[m.elements[e][0]] + m.nodes[m.elements[e][1]] + m.nodes[m.elements[e][2]]) / 3.0;
      const double d = (c - x).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(e);
      }
    }
    return best;
  }

 private:
  std::pair<int, int> cell(const Point& x) const {
    auto idx = [&](int k) {
      const double span = hi_[k] - lo_[k];
      const int c = static_cast<int>(std::floor((x[k] - lo_[k]) / span * cells_));
      return std::clamp(c, 0, cells_ - 1);
    };
    return {idx(0), idx(1)};
  }

  std::shared_ptr<const Domain> dom_;
  Point lo_, hi_;
  int cells_ = 1;
  std::vector<std::vector<int>> buckets_;
};

int EllipticSolution::locate(const Point& x) const { return locator->locate(x); }

double EllipticSolution::value(const Point& x) const {
  const int e = locate(x);
  const auto l = locator->barycentric(e, x);
  const auto& el = domain->mesh.elements[static_cast<std::size_t>(e)];
  double v = 0.0;
  for (int k = 0; k <= domain->dim; ++k) v += l[k] * eta[el[k]];
  return v;
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

EllipticSolution solve_neumann(const Domain& dom, double lambda, const ScalarFn& f) {
  if (!(lambda > 0.0)) throw std::invalid_argument("solve_neumann: lambda must be positive");
  EllipticSolution sol;
  sol.domain = std::make_shared<const Domain>(dom);
  sol.lambda = lambda;
  sol.f = f;
  sol.locator = std::make_shared<const PointLocator>(sol.domain);
  const Mesh& m = sol.domain->mesh;
  const int nv = m.vertices_per_element();
  const std::size_t ne = m.elements.size();

  struct Local {
    Matrix a;
    Vector rhs;
    double f2 = 0.0;
  };
  std::vector<Local> local(ne);
  parallel_for(ne, [&](std::size_t e) {
    const ElementRule r = element_rule(m, e);
    const Matrix g = basis_gradients(m, e);
    Local& L = local[e];
    L.a = r.mass * (g.transpose() * g);
    L.rhs = Vector::Zero(nv);
    for (std::size_t q = 0; q < r.points.size(); ++q) {
      const double fq = f(r.points[q]);
      L.f2 += r.weights[q] * fq * fq;
      for (int i = 0; i < nv; ++i) {
        L.rhs[i] += r.weights[q] * fq * r.bary[q][i];
        for (int j = 0; j < nv; ++j) L.a(i, j) += lambda * r.weights[q] * r.bary[q][i] * r.bary[q][j];
      }
    }
  });

  const auto n = static_cast<Eigen::Index>(m.nodes.size());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(ne * static_cast<std::size_t>(nv * nv));
  Vector rhs = Vector::Zero(n);
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& el = m.elements[e];
    for (int i = 0; i < nv; ++i) {
      rhs[el[i]] += local[e].rhs[i];
      for (int j = 0; j < nv; ++j) trips.emplace_back(el[i], el[j], local[e].a(i, j));
    }
    sol.f_l2sq += local[e].f2;
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("solve_neumann: factorization failed");
  sol.eta = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !sol.eta.allFinite()) throw std::runtime_error("solve_neumann: solve failed");
  sol.discrete_residual = (a * sol.eta - rhs).lpNorm<Eigen::Infinity>() / std::max(1.0, rhs.lpNorm<Eigen::Infinity>());

  sol.grad_eta.resize(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    const auto& el = m.elements[e];
    const Matrix g = basis_gradients(m, e);
    Vector grad = Vector::Zero(m.dim);
    for (int i = 0; i < nv; ++i) grad += sol.eta[el[i]] * g.col(i);
    sol.grad_eta[e] = grad;
    Vector loc(nv);
    for (int i = 0; i < nv; ++i) loc[i] = sol.eta[el[i]];
    sol.energy += loc.dot(local[e].a * loc);
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Extended field
// ---------------------------------------------------------------------------

Vector ExtendedField::value(const Point& x) const {
  if (!sol->domain->contains(x)) return Vector::Zero(sol->domain->dim);
  return sol->grad_eta[static_cast<std::size_t>(sol->locate(x))];
}

ExtendedField extended_field(const EllipticSolution& sol) {
  ExtendedField b;
  b.sol = std::make_shared<const EllipticSolution>(sol);
  const Mesh& m = sol.domain->mesh;
  const Rule1D gl = gauss_legendre_rule(kElementQuadrature, 0.0, 1.0);
  for (const Facet& f : m.boundary) {
    BoundaryTrace t;
    t.normal = f.normal;
    t.trace = sol.grad_eta[static_cast<std::size_t>(f.element)];
    if (m.dim == 1) {
      t.midpoint = m.nodes[f.nodes[0]];
      t.mass = gauss_density(t.midpoint);
    } else {
      const Point& p = m.nodes[f.nodes[0]];
      const Point d = m.nodes[f.nodes[1]] - p;
      t.midpoint = p + 0.5 * d;
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) t.mass += gl.weights[q] * d.norm() * gauss_density(p + gl.nodes[q] * d);
    }
    b.tv_jump += t.mass * t.trace.norm();
    b.normal_trace_l1 += t.mass * std::abs(t.trace.dot(t.normal));
    b.boundary.push_back(std::move(t));
  }
  return b;
}

BVField ExtendedField::bv_field() const {
  const Mesh& m = sol->domain->mesh;
  if (m.boundary.size() > 12) throw std::domain_error("bv_field: more than 12 boundary facets");
  std::vector<Interface> ifaces;
  for (const Facet& f : m.boundary) {
    Interface iface;
    iface.normal = f.normal;
    iface.offset = f.normal.dot(m.nodes[f.nodes[0]]);
    ifaces.push_back(std::move(iface));
  }
  const int d = m.dim;
  std::vector<SmoothField> pieces(std::size_t{1} << ifaces.size(), SmoothField::zero(d));
  // pattern 0: inside every half-plane
  SmoothField inner;
  inner.dim = d;
  inner.name = "grad-eta";
  auto s = sol;
  inner.eval = [s](const Point& x) { return s->grad_eta[static_cast<std::size_t>(s->locate(x))]; };
  inner.jacobian = [d](const Point&) { return Matrix::Zero(d, d); };
  pieces[0] = std::move(inner);
  return BVField(d, std::move(ifaces), std::move(pieces), "neumann-grad");
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

WeakDivReport weak_div_check(const ExtendedField& b, const std::vector<TestFunction>& phis, double tolerance) {
  const EllipticSolution& sol = *b.sol;
  const Mesh& m = sol.domain->mesh;
  WeakDivReport rep;
  rep.h = m.h();
  rep.tolerance = tolerance;
  rep.rows.resize(phis.size());
  for (std::size_t k = 0; k < phis.size(); ++k) rep.rows[k].phi = phis[k].name;
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    const ElementRule r = element_rule(m, e);
    const auto& el = m.elements[e];
    for (std::size_t q = 0; q < r.points.size(); ++q) {
      double eta = 0.0;
      for (int i = 0; i <= m.dim; ++i) eta += r.bary[q][i] * sol.eta[el[i]];
      const double src = sol.f(r.points[q]) - sol.lambda * eta;
      for (std::size_t k = 0; k < phis.size(); ++k) {
        rep.rows[k].lhs += r.weights[q] * phis[k].grad(r.points[q]).dot(sol.grad_eta[e]);
        rep.rows[k].rhs += r.weights[q] * src * phis[k].value(r.points[q]);
      }
    }
  }
  for (auto& row : rep.rows) {
    row.residual = std::abs(row.lhs - row.rhs);
    rep.max_residual = std::max(rep.max_residual, row.residual);
  }
  rep.pass = rep.max_residual < tolerance;
  return rep;
}

ComparisonReport comparison_check(const EllipticSolution& sol) {
  const Mesh& m = sol.domain->mesh;
  ComparisonReport rep;
  rep.f_max = -std::numeric_limits<double>::infinity();
  rep.f_min = std::numeric_limits<double>::infinity();
  auto see = [&](const Point& x) {
    const double v = sol.f(x);
    rep.f_max = std::max(rep.f_max, v);
    rep.f_min = std::min(rep.f_min, v);
  };
  for (const auto& p : m.nodes) see(p);
  for (std::size_t e = 0; e < m.elements.size(); ++e)
    for (const auto& x : element_rule(m, e).points) see(x);
  rep.lambda_max_eta = sol.lambda * sol.eta.maxCoeff();
  rep.lambda_min_eta = sol.lambda * sol.eta.minCoeff();
  const double h = m.h();
  rep.tolerance = h * h * (rep.f_max - rep.f_min) + 1e-10;
  rep.pass = rep.lambda_max_eta <= rep.f_max + rep.tolerance && rep.lambda_min_eta >= rep.f_min - rep.tolerance;
  return rep;
}

double l2_difference(const EllipticSolution& coarse, const EllipticSolution& fine) {
  const Mesh& m = fine.domain->mesh;
  double acc = 0.0;
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    const ElementRule r = element_rule(m, e);
    const auto& el = m.elements[e];
    for (std::size_t q = 0; q < r.points.size(); ++q) {
      double v = 0.0;
      for (int i = 0; i <= m.dim; ++i) v += r.bary[q][i] * fine.eta[el[i]];
      const double d = coarse.value(r.points[q]) - v;
      acc += r.weights[q] * d * d;
    }
  }
  return std::sqrt(acc);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i)
    if (x[i] > 0 && y[i] > 0 && std::isfinite(x[i]) && std::isfinite(y[i])) pts.emplace_back(std::log(x[i]), std::log(y[i]));
  if (pts.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (const auto& [a, b] : pts) {
    mx += a;
    my += b;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0, sxx = 0;
  for (const auto& [a, b] : pts) {
    sxy += (a - mx) * (b - my);
    sxx += (a - mx) * (a - mx);
  }
  return sxy / sxx;
}

RefinementStudy refinement_study(const Domain& coarse, double lambda, const ScalarFn& f, int refinements,
                                 const std::vector<TestFunction>& phis) {
  if (refinements < 0) throw std::invalid_argument("refinement_study: refinements must be >= 0");
  RefinementStudy st;
  Domain dom = coarse;
  std::optional<EllipticSolution> prev;
  for (int level = 0; level <= refinements; ++level) {
    if (level > 0) dom = dom.refined();
    EllipticSolution sol = solve_neumann(dom, lambda, f);
    const ExtendedField b = extended_field(sol);
    const WeakDivReport w = weak_div_check(b, phis);
    const ComparisonReport c = comparison_check(sol);
    RefinementLevel row;
    row.level = level;
    row.elements = static_cast<int>(dom.mesh.elements.size());
    row.h = dom.mesh.h();
    row.weak_residual = w.max_residual;
    row.l2_to_next = std::numeric_limits<double>::quiet_NaN();
    row.tv_jump = b.tv_jump;
    row.normal_trace_l1 = b.normal_trace_l1;
    row.energy = sol.energy;
    row.energy_bound = sol.f_l2sq / lambda;
    row.lambda_max_eta = c.lambda_max_eta;
    row.lambda_min_eta = c.lambda_min_eta;
    row.comparison_pass = c.pass;
    row.discrete_residual = sol.discrete_residual;
    if (prev) st.levels.back().l2_to_next = l2_difference(*prev, sol);
    st.levels.push_back(row);
    prev = std::move(sol);
  }
  std::vector<double> h, res, l2, nt;
  for (const auto& r : st.levels) {
    h.push_back(r.h);
    res.push_back(r.weak_residual);
    l2.push_back(r.l2_to_next);
    nt.push_back(r.normal_trace_l1);
  }
  st.residual_order = loglog_slope(h, res);
  st.l2_order = loglog_slope(h, l2);
  st.normal_trace_order = loglog_slope(h, nt);
  return st;
}

}  // namespace renorm
