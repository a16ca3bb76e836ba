#include "warpgeo/rmap.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

namespace warpgeo {

namespace {

constexpr double kProjectorStep = 1e-3;  // finite-difference step for dP
constexpr double kDilationStep = 1e-5;   // finite-difference step for grad lambda^2

double norm_g(const Matrix& g, const Vector& v) { return std::sqrt(std::max(0.0, pair(g, v, v))); }

Vector unit(int n, int k) {
  Vector e = Vector::Zero(n);
  e[k] = 1.0;
  return e;
}

// Pivoted Gram-Schmidt of P e_k in the metric g: deterministic, and picks
// coordinate directions whenever the subspace contains them.
std::vector<Vector> canonical_basis(const Matrix& projector, const Matrix& g, int count) {
  const int m = static_cast<int>(g.rows());
  std::vector<Vector> basis;
  std::vector<Vector> candidates;
  for (int k = 0; k < m; ++k) candidates.push_back(projector * unit(m, k));
  std::vector<bool> used(m, false);
  while (static_cast<int>(basis.size()) < count) {
    double best = -1.0;
    std::vector<double> norms(m, 0.0);
    for (int k = 0; k < m; ++k) {
      if (used[k]) continue;
      Vector r = candidates[k];
      for (const Vector& b : basis) r -= pair(g, b, r) * b;
      norms[k] = norm_g(g, r);
      best = std::max(best, norms[k]);
    }
    int pick = -1;
    for (int k = 0; k < m; ++k) {
      if (!used[k] && norms[k] >= (1.0 - 1e-9) * best) {
        pick = k;
        break;
      }
    }
    if (pick < 0 || best <= 0.0) break;
    used[pick] = true;
    Vector r = candidates[pick];
    for (const Vector& b : basis) r -= pair(g, b, r) * b;
    // A second pass keeps orthogonality at round-off level.
    for (const Vector& b : basis) r -= pair(g, b, r) * b;
    basis.push_back(r / norm_g(g, r));
  }
  return basis;
}

// Four-point central difference of a vector-valued function along t.
Vector central_difference(const std::function<Vector(double)>& fn, double h) {
  return (-fn(2 * h) + 8.0 * fn(h) - 8.0 * fn(-h) + fn(-2 * h)) / (12.0 * h);
}

Matrix central_difference_matrix(const std::function<Matrix(double)>& fn, double h) {
  return (-fn(2 * h) + 8.0 * fn(h) - 8.0 * fn(-h) + fn(-2 * h)) / (12.0 * h);
}

// Vertical projector at a nearby point; the rank must not change inside a
// finite-difference stencil.
Matrix vertical_projector_near(const SmoothMap& phi, const Point& x, int rank, double tol) {
  const DistributionSplit s = distribution_split_at(phi, x, tol);
  if (s.rank != rank) {
    throw Error(ErrorCode::AmbiguousRank, "rank of '" + phi.name() +
                                              "' changes within the finite-difference stencil");
  }
  return s.vertical_projector;
}

std::vector<Matrix> projector_derivatives(const SmoothMap& phi, const Point& p, int rank,
                                          double tol) {
  const int m = phi.source().dim();
  std::vector<Matrix> out;
  for (int k = 0; k < m; ++k) {
    out.push_back(central_difference_matrix(
        [&](double t) {
          Point x = p;
          x.coords[k] += t;
          return vertical_projector_near(phi, x, rank, tol);
        },
        kProjectorStep));
  }
  return out;
}

Matrix directional(const std::vector<Matrix>& d, const Vector& v) {
  Matrix out = Matrix::Zero(d.front().rows(), d.front().cols());
  for (std::size_t k = 0; k < d.size(); ++k) out += v[k] * d[k];
  return out;
}

Vector grad_of(const ChartedManifold& m, const Expr& h, const Point& p) {
  return gradient_at(m, h, p).components;
}

Vector grad_ln(const ChartedManifold& m, const Expr& f, const Point& p) {
  return grad_of(m, Expr::call(Function::Ln, f), p);
}

Vector lift_base(const ProductMap& phi, const Vector& v) {
  Vector out = Vector::Zero(phi.source.base_dim() + phi.source.fiber_dim());
  out.head(phi.source.base_dim()) = v;
  return out;
}

Vector lift_fiber(const ProductMap& phi, const Vector& v) {
  Vector out = Vector::Zero(phi.source.base_dim() + phi.source.fiber_dim());
  out.tail(phi.source.fiber_dim()) = v;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// SmoothMap

SmoothMap::SmoothMap(std::string name, ChartedManifold source, ChartedManifold target,
                     std::vector<Expr> components)
    : name_(std::move(name)),
      source_(std::move(source)),
      target_(std::move(target)),
      components_(std::move(components)) {
  if (static_cast<int>(components_.size()) != target_.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "map '" + name_ + "' has " + std::to_string(components_.size()) +
                    " components but its target has dimension " + std::to_string(target_.dim()));
  }
  const std::vector<std::string> symbols = source_.symbol_names();
  for (const Expr& c : components_) {
    for (const auto& v : free_variables(c)) {
      if (std::find(symbols.begin(), symbols.end(), v) == symbols.end()) {
        throw Error(ErrorCode::UnknownVariable,
                    "map '" + name_ + "' references '" + v + "', unknown on its source");
      }
    }
  }
}

SmoothMap SmoothMap::from_strings(std::string name, ChartedManifold source, ChartedManifold target,
                                  const std::vector<std::string>& components) {
  const std::vector<std::string> symbols = source.symbol_names();
  std::vector<Expr> parsed;
  for (const auto& c : components) parsed.push_back(parse(c, symbols));
  return SmoothMap(std::move(name), std::move(source), std::move(target), std::move(parsed));
}

Point SmoothMap::image(const Point& p) const {
  source_.check_admissible(p);
  const Bindings b = source_.bindings(p);
  Vector y(target_.dim());
  for (int a = 0; a < target_.dim(); ++a) y[a] = evaluate(components_[a], b);
  Point q{y};
  target_.check_admissible(q);
  return q;
}

Matrix differential_at(const SmoothMap& phi, const Point& p) {
  phi.image(p);
  const ChartedManifold& src = phi.source();
  const Bindings b = src.bindings(p);
  const int n = phi.target().dim();
  const int m = src.dim();
  Matrix d(n, m);
  for (int a = 0; a < n; ++a) {
    const Jet2 jet = eval_jet2(phi.components()[a], b, src.coordinates());
    for (int i = 0; i < m; ++i) d(a, i) = jet.grad(i);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Vertical / horizontal split

DistributionSplit distribution_split_at(const SmoothMap& phi, const Point& p,
                                        double rank_tolerance) {
  const Matrix d = differential_at(phi, p);
  const Point q = phi.image(p);
  const Matrix g = metric_at(phi.source(), p).g;
  const Matrix gn = metric_at(phi.target(), q).g;
  const int m = phi.source().dim();

  // Orthonormal frames: g = L L^T, G = K K^T, so D~ = K^T D L^{-T}.
  const Eigen::LLT<Matrix> lg(g);
  const Eigen::LLT<Matrix> ln(gn);
  const Matrix l_inv_t = lg.matrixU().solve(Matrix::Identity(m, m));
  const Matrix dt = Matrix(ln.matrixU()) * d * l_inv_t;
  Eigen::JacobiSVD<Matrix> svd(dt, Eigen::ComputeFullV);
  const Vector sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  const double threshold = rank_tolerance * smax;

  DistributionSplit out;
  out.at = p;
  out.singular_values = sv;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (smax > 0.0 && sv[i] >= threshold / 10.0 && sv[i] <= threshold * 10.0) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "ambiguous rank for map '%s': singular value %.3g is within a factor 10 of "
                    "the threshold %.3g",
                    phi.name().c_str(), sv[i], threshold);
      throw Error(ErrorCode::AmbiguousRank, buf);
    }
    if (smax > 0.0 && sv[i] > threshold) ++rank;
  }
  out.rank = rank;

  Matrix pv = Matrix::Zero(m, m);
  const Matrix v = svd.matrixV();
  for (int c = rank; c < m; ++c) {
    const Vector w = l_inv_t * v.col(c);
    pv += w * (w.transpose() * g);
  }
  out.vertical_projector = pv;
  out.horizontal_projector = Matrix::Identity(m, m) - pv;
  out.vertical_basis = canonical_basis(pv, g, m - rank);
  out.horizontal_basis = canonical_basis(out.horizontal_projector, g, rank);
  return out;
}

ConformalityReport conformality_report_at(const SmoothMap& phi, const Point& p) {
  const DistributionSplit s = distribution_split_at(phi, p);
  if (s.rank == 0) {
    throw Error(ErrorCode::NoHorizontalSpace, "map '" + phi.name() + "' has rank 0 at this point");
  }
  const Matrix d = differential_at(phi, p);
  const Matrix gn = metric_at(phi.target(), phi.image(p)).g;
  const int r = s.rank;
  Matrix gram(r, r);
  for (int a = 0; a < r; ++a) {
    for (int b = 0; b < r; ++b) {
      gram(a, b) = pair(gn, d * s.horizontal_basis[a], d * s.horizontal_basis[b]);
    }
  }
  ConformalityReport out;
  out.dilation_squared = gram.trace() / r;
  const Matrix id = Matrix::Identity(r, r);
  out.conformal_defect = (gram - out.dilation_squared * id).cwiseAbs().maxCoeff();
  out.isometry_defect = (gram - id).cwiseAbs().maxCoeff();
  return out;
}

// ---------------------------------------------------------------------------
// O'Neill tensors

namespace {

ONeillTensors oneill_projector(const SmoothMap& phi, const Point& p, const DistributionSplit& s,
                               double tol) {
  const int m = phi.source().dim();
  const Tensor3 gamma = christoffel_at(phi.source(), p);
  const std::vector<Matrix> dpv = projector_derivatives(phi, p, s.rank, tol);
  const Matrix& pv = s.vertical_projector;
  const Matrix& ph = s.horizontal_projector;
  ONeillTensors out{Tensor3(m), Tensor3(m), s};
  for (int i = 0; i < m; ++i) {
    const Vector ve = pv.col(i);
    const Vector he = ph.col(i);
    const Matrix dv = directional(dpv, ve);
    const Matrix dh = directional(dpv, he);
    for (int j = 0; j < m; ++j) {
      const Vector f = unit(m, j);
      // nabla_E (P F) = (d_E P) F + Gamma(E, P F); d P_H = -d P_V.
      const Vector t = ph * (dv * f + gamma.contract(ve, pv * f)) +
                       pv * (-dv * f + gamma.contract(ve, ph * f));
      const Vector a = ph * (dh * f + gamma.contract(he, pv * f)) +
                       pv * (-dh * f + gamma.contract(he, ph * f));
      for (int k = 0; k < m; ++k) {
        out.T(k, i, j) = t[k];
        out.A(k, i, j) = a[k];
      }
    }
  }
  return out;
}

// Frame at x obtained from the frame at p by projecting with P(x) and
// re-orthonormalizing in g(x).
std::vector<Vector> transported_frame(const std::vector<Vector>& frame, const Matrix& projector,
                                      const Matrix& g) {
  std::vector<Vector> out;
  for (const Vector& u : frame) {
    Vector r = projector * u;
    for (const Vector& b : out) r -= pair(g, b, r) * b;
    out.push_back(r / norm_g(g, r));
  }
  return out;
}

ONeillTensors oneill_gram_schmidt(const SmoothMap& phi, const Point& p, const DistributionSplit& s,
                                  double tol) {
  const int m = phi.source().dim();
  const Tensor3 gamma = christoffel_at(phi.source(), p);
  const Matrix gp = metric_at(phi.source(), p).g;
  const Matrix& pv = s.vertical_projector;
  const Matrix& ph = s.horizontal_projector;

  // Extended field: scale(x) * sum_a c_a u_a(x), with c_a = g_p(u_a(p), F).
  const auto extend = [&](const Vector& f, bool vertical) {
    const std::vector<Vector>& frame = vertical ? s.vertical_basis : s.horizontal_basis;
    std::vector<double> coeff;
    for (const Vector& u : frame) coeff.push_back(pair(gp, u, f));
    return [&, coeff, vertical](const Point& x) -> Vector {
      Vector out = Vector::Zero(m);
      if (coeff.empty()) return out;
      const Matrix pvx = vertical_projector_near(phi, x, s.rank, tol);
      const Matrix proj = vertical ? pvx : Matrix(Matrix::Identity(m, m) - pvx);
      const Matrix gx = metric_at(phi.source(), x).g;
      const std::vector<Vector> ux = transported_frame(frame, proj, gx);
      for (std::size_t a = 0; a < ux.size(); ++a) out += coeff[a] * ux[a];
      const Vector dx = x.coords - p.coords;
      const double scale = 1.0 + 0.3 * dx.sum() + 0.2 * dx[0] * dx[0];
      return scale * out;
    };
  };
  const auto covariant = [&](const Vector& e, const std::function<Vector(const Point&)>& field) {
    const Vector value = field(p);
    const Vector de = central_difference(
        [&](double t) { return field(Point{p.coords + t * e}); }, kProjectorStep);
    return Vector(de + gamma.contract(e, value));
  };

  ONeillTensors out{Tensor3(m), Tensor3(m), s};
  for (int i = 0; i < m; ++i) {
    const Vector ve = pv.col(i);
    const Vector he = ph.col(i);
    for (int j = 0; j < m; ++j) {
      const Vector f = unit(m, j);
      const auto vf = extend(f, true);
      const auto hf = extend(f, false);
      Vector t = Vector::Zero(m);
      Vector a = Vector::Zero(m);
      if (ve.norm() > 0.0) t = ph * covariant(ve, vf) + pv * covariant(ve, hf);
      if (he.norm() > 0.0) a = ph * covariant(he, vf) + pv * covariant(he, hf);
      for (int k = 0; k < m; ++k) {
        out.T(k, i, j) = t[k];
        out.A(k, i, j) = a[k];
      }
    }
  }
  return out;
}

}  // namespace

ONeillTensors oneill_tensors_at(const SmoothMap& phi, const Point& p, FrameExtension extension,
                                double rank_tolerance) {
  const DistributionSplit s = distribution_split_at(phi, p, rank_tolerance);
  if (extension == FrameExtension::Projector) return oneill_projector(phi, p, s, rank_tolerance);
  return oneill_gram_schmidt(phi, p, s, rank_tolerance);
}

// ---------------------------------------------------------------------------
// Second fundamental form

Vector SecondFundamentalForm::apply(const Vector& x, const Vector& y) const {
  Vector out(coordinate.size());
  for (std::size_t a = 0; a < coordinate.size(); ++a) out[a] = x.dot(coordinate[a] * y);
  return out;
}

SecondFundamentalForm second_fundamental_form_at(const SmoothMap& phi, const Point& p) {
  const ChartedManifold& src = phi.source();
  const Point q = phi.image(p);
  const Tensor3 gm = christoffel_at(src, p);
  const Tensor3 gn = christoffel_at(phi.target(), q);
  const Bindings b = src.bindings(p);
  const int m = src.dim();
  const int n = phi.target().dim();
  std::vector<Jet2> jets;
  Matrix d(n, m);
  for (int a = 0; a < n; ++a) {
    jets.push_back(eval_jet2(phi.components()[a], b, src.coordinates()));
    for (int i = 0; i < m; ++i) d(a, i) = jets.back().grad(i);
  }

  SecondFundamentalForm out;
  out.split = distribution_split_at(phi, p);
  for (int a = 0; a < n; ++a) {
    Matrix h(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        double s = jets[a].hess(i, j);
        for (int c = 0; c < n; ++c) {
          for (int e = 0; e < n; ++e) s += gn(a, c, e) * d(c, i) * d(e, j);
        }
        for (int k = 0; k < m; ++k) s -= gm(k, i, j) * d(a, k);
        h(i, j) = s;
      }
    }
    out.coordinate.push_back(h);
  }
  const auto& hb = out.split.horizontal_basis;
  out.tension = Vector::Zero(n);
  for (std::size_t x = 0; x < hb.size(); ++x) {
    std::vector<Vector> row;
    for (std::size_t y = 0; y < hb.size(); ++y) row.push_back(out.apply(hb[x], hb[y]));
    out.tension += row[x];
    out.table.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fiber geometry

FiberGeometry fiber_geometry_at(const SmoothMap& phi, const Point& p) {
  FiberGeometry out;
  out.oneill = oneill_tensors_at(phi, p);
  const DistributionSplit& s = out.oneill.split;
  const int m = phi.source().dim();
  const Matrix g = metric_at(phi.source(), p).g;
  const auto& vb = s.vertical_basis;
  out.mean_curvature = Vector::Zero(m);
  if (vb.empty()) {
    out.aligned_coordinates = std::vector<int>{};
    return out;
  }
  for (const Vector& u : vb) out.mean_curvature += out.oneill.T_apply(u, u);
  out.mean_curvature /= static_cast<double>(vb.size());

  // Polarization set: basis vectors and (u_i +- u_j) / sqrt 2.
  std::vector<Vector> probes = vb;
  for (std::size_t i = 0; i < vb.size(); ++i) {
    for (std::size_t j = i + 1; j < vb.size(); ++j) {
      probes.push_back((vb[i] + vb[j]) / std::sqrt(2.0));
      probes.push_back((vb[i] - vb[j]) / std::sqrt(2.0));
    }
  }
  for (const Vector& u : probes) {
    const Vector r = out.oneill.T_apply(u, u) - pair(g, u, u) * out.mean_curvature;
    out.umbilicity_residual = std::max(out.umbilicity_residual, norm_g(g, r));
  }

  std::vector<int> aligned;
  for (int k = 0; k < m; ++k) {
    const Vector e = unit(m, k);
    if (norm_g(g, s.vertical_projector * e - e) <= 1e-9 * norm_g(g, e)) aligned.push_back(k);
  }
  if (aligned.size() == vb.size()) {
    out.aligned_coordinates = aligned;
    const ChartedManifold slice = phi.source().coordinate_slice(aligned, p);
    Vector sc(aligned.size());
    for (std::size_t a = 0; a < aligned.size(); ++a) sc[a] = p.coords[aligned[a]];
    out.fiber_curvature = curvature_at(slice, Point{sc});
  } else {
    out.alignment_error = "fibers of '" + phi.name() + "' are not coordinate-aligned at this point";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Product maps

ProductMap product_map_build(std::string name, const SmoothMap& phi1, const SmoothMap& phi2,
                             const Expr& f, const Expr& rho) {
  ProductMap out;
  out.source = WarpedProduct(name + ".source", phi1.source(), phi2.source(), f);
  out.target = WarpedProduct(name + ".target", phi1.target(), phi2.target(), rho);
  out.first = phi1;
  out.second = phi2;
  std::vector<Expr> components = phi1.components();
  components.insert(components.end(), phi2.components().begin(), phi2.components().end());
  out.map = SmoothMap(std::move(name), out.source.charted(), out.target.charted(),
                      std::move(components));
  return out;
}

ProductMap product_map_build(std::string name, const SmoothMap& phi1, const SmoothMap& phi2,
                             std::string_view f, std::string_view rho) {
  return product_map_build(std::move(name), phi1, phi2, parse(f, phi1.source().symbol_names()),
                           parse(rho, phi1.target().symbol_names()));
}

ClairautCheck clairaut_check_at(const ProductMap& phi, const Point& p) {
  const Point p1 = phi.base_point(p);
  const Point p2 = phi.fiber_point(p);
  const ChartedManifold& mm = phi.source.charted();
  const Matrix g = metric_at(mm, p).g;
  const double f = phi.source.warp_at(p);

  ClairautCheck out;
  out.first_umbilicity = fiber_geometry_at(phi.first, p1).umbilicity_residual;

  const ONeillTensors t2 = oneill_tensors_at(phi.second, p2);
  const Matrix g2 = metric_at(phi.second.source(), p2).g;
  const auto& v2 = t2.split.vertical_basis;
  for (std::size_t a = 0; a < v2.size(); ++a) {
    for (std::size_t b = a; b < v2.size(); ++b) {
      out.second_geodesic = std::max(out.second_geodesic, norm_g(g2, t2.T_apply(v2[a], v2[b])));
    }
  }

  const ONeillTensors tm = oneill_tensors_at(phi.map, p);
  out.grad_ln_f = lift_base(phi, grad_ln(phi.source.base(), phi.source.warp(), p1));
  if (!v2.empty()) {
    Vector h2 = Vector::Zero(mm.dim());
    for (const Vector& u : v2) {
      const Vector lifted = lift_fiber(phi, u / f);
      h2 += tm.T_apply(lifted, lifted);
    }
    h2 /= static_cast<double>(v2.size());
    out.fiber_mean_curvature = norm_g(g, h2 + out.grad_ln_f);
  }
  out.mean_curvature = Vector::Zero(mm.dim());
  const auto& vm = tm.split.vertical_basis;
  for (const Vector& u : vm) out.mean_curvature += tm.T_apply(u, u);
  if (!vm.empty()) out.mean_curvature /= static_cast<double>(vm.size());
  out.full_mean_curvature = norm_g(g, out.mean_curvature + out.grad_ln_f);
  out.residual = std::max({out.first_umbilicity, out.second_geodesic, out.fiber_mean_curvature});
  return out;
}

// ---------------------------------------------------------------------------
// Conformal identities

namespace {

// 1 / lambda^2 gradient restricted to the vertical space, on one factor.
Vector vertical_grad_inverse_dilation(const SmoothMap& phi, const Point& x,
                                      const DistributionSplit& s) {
  const int m = phi.source().dim();
  Vector d(m);
  for (int k = 0; k < m; ++k) {
    d[k] = central_difference(
        [&](double t) {
          Point y = x;
          y.coords[k] += t;
          Vector v(1);
          v[0] = 1.0 / conformality_report_at(phi, y).dilation_squared;
          return v;
        },
        kDilationStep)[0];
  }
  return s.vertical_projector * (metric_at(phi.source(), x).inverse * d);
}

// V [Y, Z] for horizontal Y, Z extended as P_H(x) Y and P_H(x) Z.
Vector vertical_bracket(const std::vector<Matrix>& dpv, const DistributionSplit& s, const Vector& y,
                        const Vector& z) {
  // d_Y (P_H Z) - d_Z (P_H Y) = -(d_Y P_V) Z + (d_Z P_V) Y.
  const Vector bracket = -directional(dpv, y) * z + directional(dpv, z) * y;
  return s.vertical_projector * bracket;
}

// Ricci-type contraction g(R(e_i, e_k) e_k, e_i) summed over a frame.
double frame_scalar(const CurvatureBundle& c, const std::vector<Vector>& frame) {
  double s = 0.0;
  for (const Vector& a : frame) {
    for (const Vector& b : frame) s += pair(c.metric, c.riemann.apply(a, b, b), a);
  }
  return s;
}

}  // namespace

ConformalIdentities conformal_identities_at(const ProductMap& phi, const Point& p) {
  const Point p1 = phi.base_point(p);
  const Point p2 = phi.fiber_point(p);
  const ChartedManifold& mm = phi.source.charted();
  const MetricAt gm = metric_at(mm, p);
  const double f = phi.source.warp_at(p);

  ConformalIdentities out;
  const ConformalityReport c1 = conformality_report_at(phi.first, p1);
  const ConformalityReport c2 = conformality_report_at(phi.second, p2);
  out.dilation_squared_first = c1.dilation_squared;
  out.dilation_squared_second = c2.dilation_squared;
  out.dilation_mismatch = std::abs(c1.dilation_squared - c2.dilation_squared);
  const DistributionSplit s1 = distribution_split_at(phi.first, p1);
  const DistributionSplit s2 = distribution_split_at(phi.second, p2);
  out.rank_first = s1.rank;
  out.rank_second = s2.rank;
  out.rho_at_image =
      evaluate(phi.target.warp(), phi.target.base().bindings(phi.first.image(p1)));

  // Hilbert-Schmidt norm of the full differential.
  const Matrix d = differential_at(phi.map, p);
  const Matrix gn = metric_at(phi.target.charted(), phi.map.image(p)).g;
  out.hilbert_schmidt = (gm.inverse * d.transpose() * gn * d).trace();
  const double rho2 = out.rho_at_image * out.rho_at_image;
  out.rank_identity_residual =
      std::abs(out.hilbert_schmidt - c1.dilation_squared * (s1.rank + rho2 * s2.rank));

  // A_Y Z against the factor-wise formula, over pairs of horizontal basis vectors.
  const ONeillTensors tm = oneill_tensors_at(phi.map, p);
  const std::vector<Matrix> dpv1 = projector_derivatives(phi.first, p1, s1.rank, kDefaultRankTolerance);
  const std::vector<Matrix> dpv2 = projector_derivatives(phi.second, p2, s2.rank, kDefaultRankTolerance);
  const Vector grad1 = vertical_grad_inverse_dilation(phi.first, p1, s1);
  const Vector grad2 = vertical_grad_inverse_dilation(phi.second, p2, s2);
  const Matrix g1 = metric_at(phi.first.source(), p1).g;
  const Matrix g2 = metric_at(phi.second.source(), p2).g;
  const Vector vgrad_ln_f =
      tm.split.vertical_projector * lift_base(phi, grad_ln(phi.source.base(), phi.source.warp(), p1));
  const int m1 = phi.source.base_dim();
  const int m2 = phi.source.fiber_dim();
  const auto& hb = tm.split.horizontal_basis;
  for (const Vector& y : hb) {
    for (const Vector& z : hb) {
      const Vector y1 = y.head(m1), z1 = z.head(m1);
      const Vector y2 = y.tail(m2), z2 = z.tail(m2);
      Vector rhs = Vector::Zero(m1 + m2);
      rhs.head(m1) = 0.5 * (vertical_bracket(dpv1, s1, y1, z1) -
                            c1.dilation_squared * pair(g1, y1, z1) * grad1);
      rhs.tail(m2) = 0.5 * (vertical_bracket(dpv2, s2, y2, z2) -
                            c2.dilation_squared * pair(g2, y2, z2) * grad2);
      rhs -= f * f * pair(g2, y2, z2) * vgrad_ln_f;
      out.a_formula_residual =
          std::max(out.a_formula_residual, norm_g(gm.g, tm.A_apply(y, z) - rhs));
    }
  }

  // Scalar curvature of the vertical distributions.
  const CurvatureBundle cm = curvature_at(mm, p);
  std::vector<Vector> v1, v2;
  for (const Vector& u : s1.vertical_basis) v1.push_back(lift_base(phi, u));
  for (const Vector& u : s2.vertical_basis) v2.push_back(lift_fiber(phi, u));
  out.scalar_vertical_first = frame_scalar(cm, v1);
  out.scalar_vertical_second = frame_scalar(cm, v2);

  const FiberGeometry fg1 = fiber_geometry_at(phi.first, p1);
  const FiberGeometry fg2 = fiber_geometry_at(phi.second, p2);
  const auto fiber_scalar = [](const FiberGeometry& fg, std::size_t dim) -> std::optional<double> {
    if (dim == 0) return 0.0;
    if (fg.fiber_curvature) return fg.fiber_curvature->scalar;
    return std::nullopt;
  };
  const double d1 = static_cast<double>(s1.vertical_basis.size());
  const double d2 = static_cast<double>(s2.vertical_basis.size());
  const Vector gl = grad_ln(phi.source.base(), phi.source.warp(), p1);
  const Vector gf = grad_of(phi.source.base(), phi.source.warp(), p1);
  const double grad_ln_sq = pair(metric_at(phi.source.base(), p1).g, gl, gl);
  const double grad_f_sq = pair(metric_at(phi.source.base(), p1).g, gf, gf);
  if (const auto s_hat = fiber_scalar(fg1, s1.vertical_basis.size())) {
    out.scalar_first_residual =
        std::abs(out.scalar_vertical_first - (*s_hat - d1 * (d1 - 1.0) * grad_ln_sq));
  }
  if (const auto s_hat = fiber_scalar(fg2, s2.vertical_basis.size())) {
    out.scalar_second_residual = std::abs(
        out.scalar_vertical_second - f * f * (*s_hat + d2 * (1.0 - d2) * grad_f_sq));
  }
  if (!out.scalar_first_residual || !out.scalar_second_residual) {
    out.scalar_note = "scalar identities need coordinate-aligned fibers";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ricci decomposition

namespace {

void finish(RicciItem& item) {
  item.rhs_computed = 0.0;
  for (const auto& t : item.terms) {
    if (t.included) item.rhs_computed += t.value;
  }
}

}  // namespace

RicciDecomposition ricci_decomposition_at(const ProductMap& phi, const Point& p) {
  const Point p1 = phi.base_point(p);
  const Point p2 = phi.fiber_point(p);
  const ChartedManifold& mm = phi.source.charted();
  const ChartedManifold& m1 = phi.source.base();
  const ChartedManifold& m2 = phi.source.fiber();
  const CurvatureBundle cm = curvature_at(mm, p);
  const double f = phi.source.warp_at(p);
  const double dim_m2 = m2.dim();

  const FiberGeometry fg1 = fiber_geometry_at(phi.first, p1);
  const FiberGeometry fg2 = fiber_geometry_at(phi.second, p2);
  const DistributionSplit& s1 = fg1.oneill.split;
  const DistributionSplit& s2 = fg2.oneill.split;
  const SecondFundamentalForm sf1 = second_fundamental_form_at(phi.first, p1);
  const SecondFundamentalForm sf2 = second_fundamental_form_at(phi.second, p2);
  const Matrix g1 = metric_at(m1, p1).g;
  const Matrix g2 = metric_at(m2, p2).g;
  const Matrix gn1 = metric_at(phi.first.target(), phi.first.image(p1)).g;
  const Matrix gn2 = metric_at(phi.second.target(), phi.second.image(p2)).g;
  const Expr ln_f = Expr::call(Function::Ln, phi.source.warp());
  const Matrix hf = covariant_hessian_at(m1, phi.source.warp(), p1);
  const Matrix hlnf = covariant_hessian_at(m1, ln_f, p1);
  const Vector gl = grad_ln(m1, phi.source.warp(), p1);
  const Vector gf = grad_of(m1, phi.source.warp(), p1);
  const double grad_ln_sq = pair(g1, gl, gl);
  const double grad_f_sq = pair(g1, gf, gf);
  const double lap_f = laplacian_at(m1, phi.source.warp(), p1);
  const double d1 = static_cast<double>(s1.vertical_basis.size());
  const auto ric = [&](const Vector& a, const Vector& b) { return pair(cm.ricci, a, b); };

  RicciDecomposition out;
  std::vector<Vector> base_frame = s1.vertical_basis;
  base_frame.insert(base_frame.end(), s1.horizontal_basis.begin(), s1.horizontal_basis.end());
  std::vector<Vector> fiber_frame = s2.vertical_basis;
  fiber_frame.insert(fiber_frame.end(), s2.horizontal_basis.begin(), s2.horizontal_basis.end());
  for (const Vector& a : base_frame) {
    for (const Vector& b : fiber_frame) {
      out.mixed_max = std::max(out.mixed_max, std::abs(ric(lift_base(phi, a), lift_fiber(phi, b / f))));
    }
  }

  const auto fiber_ricci = [](const FiberGeometry& fg, const Vector& u) -> std::optional<double> {
    if (!fg.fiber_curvature || !fg.aligned_coordinates) return std::nullopt;
    const auto& idx = *fg.aligned_coordinates;
    Vector r(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) r[a] = u[idx[a]];
    return pair(fg.fiber_curvature->ricci, r, r);
  };
  const auto a_sq = [](const ONeillTensors& t, const Matrix& g, const std::vector<Vector>& frame,
                       const Vector& u, bool frame_first) {
    double s = 0.0;
    for (const Vector& e : frame) {
      const Vector v = frame_first ? t.A_apply(e, u) : t.A_apply(u, e);
      s += pair(g, v, v);
    }
    return s;
  };

  // (i) Ric(U1, U1)
  if (!s1.vertical_basis.empty()) {
    const Vector u = s1.vertical_basis.front();
    RicciItem item{"(i) Ric(U1,U1)", ric(lift_base(phi, u), lift_base(phi, u)), {}, 0.0, {}};
    if (const auto r = fiber_ricci(fg1, u)) {
      item.terms.push_back({"fiber Ricci of phi1", *r});
    } else {
      item.uncomputed.push_back("fiber Ricci of phi1 (fibers not coordinate-aligned)");
    }
    item.terms.push_back({"-(m1-n1)|grad ln f|^2 g(U1,U1)", -d1 * grad_ln_sq});
    item.terms.push_back({"-(m2/f) H^f(U1,U1)", -(dim_m2 / f) * pair(hf, u, u)});
    item.terms.push_back({"-m2 f H^f(U1,U1) [as printed]", -dim_m2 * f * pair(hf, u, u), false});
    double div = 0.0;
    for (const Vector& e : s1.horizontal_basis) div += pair(hlnf, e, e);
    item.terms.push_back({"-g(U1,U1) Div_h1(grad ln f)", -div});
    item.terms.push_back({"sum_a |A1(e_a,U1)|^2", a_sq(fg1.oneill, g1, s1.horizontal_basis, u, true)});
    finish(item);
    out.items.push_back(item);
  }
  // (ii) Ric(U2, U2), U2 unit for g2
  if (!s2.vertical_basis.empty()) {
    const Vector u = s2.vertical_basis.front();
    RicciItem item{"(ii) Ric(U2,U2)", ric(lift_fiber(phi, u), lift_fiber(phi, u)), {}, 0.0, {}};
    if (const auto r = fiber_ricci(fg2, u)) {
      item.terms.push_back({"f^2 fiber Ricci of phi2", f * f * *r});
    } else {
      item.uncomputed.push_back("fiber Ricci of phi2 (fibers not coordinate-aligned)");
    }
    item.terms.push_back({"-(f lap f + f^2 (m2-1)|grad f|^2) g2(U2,U2)",
                          -(f * lap_f + f * f * (dim_m2 - 1.0) * grad_f_sq)});
    item.terms.push_back(
        {"f^2 sum_b |A2(e_b,U2)|^2", f * f * a_sq(fg2.oneill, g2, s2.horizontal_basis, u, true)});
    finish(item);
    out.items.push_back(item);
  }
  // (iii) Ric(Y1, U1)
  if (!s1.vertical_basis.empty() && !s1.horizontal_basis.empty()) {
    const Vector u = s1.vertical_basis.front();
    const Vector y = s1.horizontal_basis.front();
    RicciItem item{"(iii) Ric(Y1,U1)", ric(lift_base(phi, y), lift_base(phi, u)), {}, 0.0, {}};
    item.terms.push_back({"-(m1-n1-1) g(nabla_U1 grad ln f, Y1)", -(d1 - 1.0) * pair(hlnf, u, y)});
    double tt = 0.0;
    for (const Vector& e : s1.horizontal_basis) {
      tt += pair(g1, fg1.oneill.T_apply(u, e), fg1.oneill.A_apply(e, y));
    }
    item.terms.push_back({"2 sum_a g(T1(U1,e_a), A1(e_a,Y1))", 2.0 * tt});
    item.terms.push_back({"-(m2/f) H^f(Y1,U1)", -(dim_m2 / f) * pair(hf, y, u)});
    item.terms.push_back({"-m2 f H^f(Y1,U1) [as printed]", -dim_m2 * f * pair(hf, y, u), false});
    item.uncomputed.push_back("g((nabla_{e_a} A1)_{e_a} Y1, U1)");
    finish(item);
    out.items.push_back(item);
  }
  // (iv) Ric(Y2, U2)
  if (!s2.vertical_basis.empty() && !s2.horizontal_basis.empty()) {
    const Vector u = s2.vertical_basis.front();
    const Vector y = s2.horizontal_basis.front();
    RicciItem item{"(iv) Ric(Y2,U2)", ric(lift_fiber(phi, y), lift_fiber(phi, u)), {}, 0.0, {}};
    item.uncomputed.push_back("f^2 g2((nabla_{e_b} A2)_{e_b} Y2, U2)");
    finish(item);
    out.items.push_back(item);
  }
  // (v) Ric(Y1, Y1)
  if (!s1.horizontal_basis.empty()) {
    const Vector y = s1.horizontal_basis.front();
    RicciItem item{"(v) Ric(Y1,Y1)", ric(lift_base(phi, y), lift_base(phi, y)), {}, 0.0, {}};
    item.terms.push_back({"-(m1-n1) g(nabla_Y1 grad ln f, Y1)", -d1 * pair(hlnf, y, y)});
    double tsq = 0.0;
    for (const Vector& e : s1.vertical_basis) {
      const Vector t = fg1.oneill.T_apply(e, y);
      tsq += pair(g1, t, t);
    }
    item.terms.push_back({"-sum_i |T1(e_i,Y1)|^2", -tsq});
    item.terms.push_back({"sum_i |A1(Y1,e_i)|^2", a_sq(fg1.oneill, g1, s1.vertical_basis, y, false)});
    const Vector b = sf1.apply(y, y);
    item.terms.push_back({"g_N1((nabla phi1_*)(Y1,Y1), tau1)", pair(gn1, b, sf1.tension)});
    item.terms.push_back({"-(m2/f) H^f(Y1,Y1)", -(dim_m2 / f) * pair(hf, y, y)});
    item.terms.push_back({"-m2 f H^f(Y1,Y1) [as printed]", -dim_m2 * f * pair(hf, y, y), false});
    double ssq = 0.0;
    for (const Vector& e : s1.horizontal_basis) {
      const Vector v = sf1.apply(y, e);
      ssq += pair(gn1, v, v);
    }
    item.terms.push_back({"-sum_a |(nabla phi1_*)(Y1,e_a)|^2", -ssq});
    item.uncomputed.push_back("Ric^{range phi1_*}(phi1_* Y1, phi1_* Y1)");
    item.uncomputed.push_back("g((nabla_{e_i} A1)_{Y1} Y1, e_i)");
    finish(item);
    out.items.push_back(item);
  }
  // (vi) Ric(Y2, Y2), Y2 unit for g2
  if (!s2.horizontal_basis.empty()) {
    const Vector y = s2.horizontal_basis.front();
    RicciItem item{"(vi) Ric(Y2,Y2)", ric(lift_fiber(phi, y), lift_fiber(phi, y)), {}, 0.0, {}};
    const Vector b = sf2.apply(y, y);
    item.terms.push_back({"f^2 g_N2((nabla phi2_*)(Y2,Y2), tau2)", f * f * pair(gn2, b, sf2.tension)});
    item.terms.push_back(
        {"f^2 sum_j |A2(Y2,e_j)|^2", f * f * a_sq(fg2.oneill, g2, s2.vertical_basis, y, false)});
    double ssq = 0.0;
    for (const Vector& e : s2.horizontal_basis) {
      const Vector v = sf2.apply(y, e);
      ssq += pair(gn2, v, v);
    }
    item.terms.push_back({"-f^2 sum_b |(nabla phi2_*)(Y2,e_b)|^2", -f * f * ssq});
    item.terms.push_back({"-(f lap f + f^2 (m2-1)|grad f|^2) g2(Y2,Y2)",
                          -(f * lap_f + f * f * (dim_m2 - 1.0) * grad_f_sq)});
    item.uncomputed.push_back("f^2 Ric^{range phi2_*}(phi2_* Y2, phi2_* Y2)");
    item.uncomputed.push_back("f^2 g2((nabla_{e_j} A2)_{Y2} Y2, e_j)");
    finish(item);
    out.items.push_back(item);
  }
  return out;
}

double vertical_velocity_grouping_residual(const ProductMap& phi, const Point& p, const Vector& u) {
  const Point p1 = phi.base_point(p);
  const Point p2 = phi.fiber_point(p);
  const ChartedManifold& mm = phi.source.charted();
  const Matrix g = metric_at(mm, p).g;
  const ONeillTensors tm = oneill_tensors_at(phi.map, p);
  if (norm_g(g, tm.split.horizontal_projector * u) > 1e-8 * std::max(1.0, norm_g(g, u))) {
    throw Error(ErrorCode::InvalidArgument, "velocity is not vertical for '" + phi.map.name() + "'");
  }
  const int m1 = phi.source.base_dim();
  const int m2 = phi.source.fiber_dim();
  const Vector u1 = u.head(m1);
  const Vector u2 = u.tail(m2);
  const ONeillTensors t1 = oneill_tensors_at(phi.first, p1);
  const ONeillTensors t2 = oneill_tensors_at(phi.second, p2);
  const Vector grad_ln_f = lift_base(phi, grad_ln(phi.source.base(), phi.source.warp(), p1));
  const Vector lhs = tm.T_apply(u, u);
  const Vector u2l = lift_fiber(phi, u2);
  const Vector rhs = lift_base(phi, t1.T_apply(u1, u1)) + lift_fiber(phi, t2.T_apply(u2, u2)) -
                     pair(g, u2l, u2l) * (tm.split.horizontal_projector * grad_ln_f);
  return norm_g(g, lhs - rhs);
}

}  // namespace warpgeo
