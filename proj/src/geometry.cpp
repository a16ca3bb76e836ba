#include "warpgeo/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace warpgeo {

namespace {

constexpr double kMinEigenvalue = 1e-12;

int upper_index(int n, int i, int j) {
  if (i > j) std::swap(i, j);
  return i * n - i * (i + 1) / 2 + j;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void check_dim(const ChartedManifold& m, const Point& p) {
  if (p.coords.size() != m.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "point has " + std::to_string(p.coords.size()) + " coordinates, manifold '" +
                    m.name() + "' has dimension " + std::to_string(m.dim()));
  }
}

void check_positive_definite(const ChartedManifold& m, const Matrix& g) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
  const double smallest = eig.eigenvalues().minCoeff();
  if (!(smallest > kMinEigenvalue)) {
    throw Error(ErrorCode::NotPositiveDefinite,
                "metric of '" + m.name() + "' is not positive definite (smallest eigenvalue " +
                    format_double(smallest) + ")");
  }
}

double scaled(double residual, double norm) { return residual / std::max(norm, 1e-12); }

}  // namespace

// ---------------------------------------------------------------------------
// ChartedManifold

ChartedManifold::ChartedManifold(std::string name, std::vector<std::string> coordinates,
                                 std::vector<Expr> upper, std::vector<Expr> constraints,
                                 Bindings parameters)
    : name_(std::move(name)),
      coordinates_(std::move(coordinates)),
      upper_(std::move(upper)),
      constraints_(std::move(constraints)),
      parameters_(std::move(parameters)) {
  const std::size_t n = coordinates_.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "manifold '" + name_ + "' has no coordinates");
  if (upper_.size() != n * (n + 1) / 2) {
    throw Error(ErrorCode::DimensionMismatch,
                "manifold '" + name_ + "' needs " + std::to_string(n * (n + 1) / 2) +
                    " metric entries, got " + std::to_string(upper_.size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (coordinates_[i] == coordinates_[j]) {
        throw Error(ErrorCode::NameCollision,
                    "manifold '" + name_ + "' repeats coordinate '" + coordinates_[i] + "'");
      }
    }
  }
}

ChartedManifold ChartedManifold::from_strings(
    std::string name, std::vector<std::string> coordinates,
    const std::vector<std::vector<std::string>>& metric,
    const std::vector<std::string>& constraints, Bindings parameters) {
  const int n = static_cast<int>(coordinates.size());
  std::vector<std::string> symbols = coordinates;
  for (const auto& [pname, value] : parameters) symbols.push_back(pname);
  if (static_cast<int>(metric.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch,
                "metric of '" + name + "' must have " + std::to_string(n) + " rows");
  }
  std::vector<Expr> upper;
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(metric[i].size()) != n) {
      throw Error(ErrorCode::DimensionMismatch,
                  "metric row " + std::to_string(i) + " of '" + name + "' must have " +
                      std::to_string(n) + " entries");
    }
    for (int j = i; j < n; ++j) upper.push_back(parse(metric[i][j], symbols));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      const Expr lower = parse(metric[i][j], symbols);
      if (!structurally_equal(lower, upper[upper_index(n, j, i)])) {
        throw Error(ErrorCode::InvalidArgument, "metric of '" + name + "' is not symmetric at (" +
                                                    std::to_string(i) + "," + std::to_string(j) +
                                                    ")");
      }
    }
  }
  std::vector<Expr> parsed_constraints;
  for (const auto& c : constraints) parsed_constraints.push_back(parse(c, symbols));
  return ChartedManifold(std::move(name), std::move(coordinates), std::move(upper),
                         std::move(parsed_constraints), std::move(parameters));
}

ChartedManifold ChartedManifold::from_diagonal(std::string name,
                                               std::vector<std::string> coordinates,
                                               const std::vector<std::string>& diagonal,
                                               const std::vector<std::string>& constraints,
                                               Bindings parameters) {
  const std::size_t n = coordinates.size();
  if (diagonal.size() != n) {
    throw Error(ErrorCode::DimensionMismatch,
                "diagonal metric of '" + name + "' must have " + std::to_string(n) + " entries");
  }
  std::vector<std::vector<std::string>> grid(n, std::vector<std::string>(n, "0"));
  for (std::size_t i = 0; i < n; ++i) grid[i][i] = diagonal[i];
  return from_strings(std::move(name), std::move(coordinates), grid, constraints,
                      std::move(parameters));
}

const Expr& ChartedManifold::metric_entry(int i, int j) const {
  return upper_[upper_index(dim(), i, j)];
}

std::vector<std::string> ChartedManifold::symbol_names() const {
  std::vector<std::string> out = coordinates_;
  for (const auto& [pname, value] : parameters_) out.push_back(pname);
  return out;
}

void ChartedManifold::set_box(std::vector<Interval> box) {
  if (static_cast<int>(box.size()) != dim()) {
    throw Error(ErrorCode::DimensionMismatch, "sampling box of '" + name_ + "' has wrong size");
  }
  box_ = std::move(box);
}

Bindings ChartedManifold::bindings(const Point& p) const {
  check_dim(*this, p);
  Bindings b = parameters_;
  for (int i = 0; i < dim(); ++i) b.set(coordinates_[i], p.coords[i]);
  return b;
}

void ChartedManifold::check_admissible(const Point& p) const {
  const Bindings b = bindings(p);
  for (const Expr& c : constraints_) {
    double v = 0.0;
    try {
      v = evaluate(c, b);
    } catch (const Error& e) {
      throw Error(ErrorCode::OutsideDomain,
                  "point outside domain of '" + name_ + "': " + std::string(e.what()));
    }
    if (!(v > 0.0)) {
      throw Error(ErrorCode::OutsideDomain,
                  "point outside domain of '" + name_ + "': constraint " + print(c) +
                      " evaluates to " + format_double(v));
    }
  }
}

bool ChartedManifold::admissible(const Point& p) const noexcept {
  try {
    check_admissible(p);
    return true;
  } catch (...) {
    return false;
  }
}

ChartedManifold ChartedManifold::coordinate_slice(std::span<const int> keep, const Point& p) const {
  check_dim(*this, p);
  Bindings params = parameters_;
  std::vector<std::string> coords;
  std::vector<bool> kept(dim(), false);
  for (int k : keep) {
    if (k < 0 || k >= dim()) throw Error(ErrorCode::InvalidArgument, "slice index out of range");
    kept[k] = true;
    coords.push_back(coordinates_[k]);
  }
  for (int i = 0; i < dim(); ++i) {
    if (!kept[i]) params.set(coordinates_[i], p.coords[i]);
  }
  std::vector<Expr> upper;
  for (std::size_t a = 0; a < keep.size(); ++a) {
    for (std::size_t b = a; b < keep.size(); ++b) upper.push_back(metric_entry(keep[a], keep[b]));
  }
  return ChartedManifold(name_ + "|slice", std::move(coords), std::move(upper), constraints_,
                         std::move(params));
}

// ---------------------------------------------------------------------------
// Riemann

Vector Riemann::apply(const Vector& x, const Vector& y, const Vector& z) const {
  Vector out = Vector::Zero(n_);
  for (int l = 0; l < n_; ++l) {
    double s = 0.0;
    for (int k = 0; k < n_; ++k) {
      for (int i = 0; i < n_; ++i) {
        for (int j = 0; j < n_; ++j) s += (*this)(l, k, i, j) * x[i] * y[j] * z[k];
      }
    }
    out[l] = s;
  }
  return out;
}

double Riemann::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double TensorIdentityResiduals::max() const {
  return std::max({christoffel_symmetry, riemann_first_pair, riemann_second_pair,
                   riemann_pair_swap, first_bianchi, ricci_symmetry});
}

// ---------------------------------------------------------------------------
// Metric and connection

MetricJet metric_jet_at(const ChartedManifold& m, const Point& p, bool second_order) {
  m.check_admissible(p);
  const int n = m.dim();
  const Bindings b = m.bindings(p);
  const auto& active = m.coordinates();
  MetricJet out;
  out.g = Matrix::Zero(n, n);
  out.d1.assign(n, Matrix::Zero(n, n));
  if (second_order) out.d2.assign(n, std::vector<Matrix>(n, Matrix::Zero(n, n)));
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const Jet2 jet = eval_jet2(m.metric_entry(i, j), b, active);
      out.g(i, j) = out.g(j, i) = jet.value();
      for (int k = 0; k < n; ++k) out.d1[k](i, j) = out.d1[k](j, i) = jet.grad(k);
      if (second_order) {
        for (int k = 0; k < n; ++k) {
          for (int l = 0; l < n; ++l) out.d2[k][l](i, j) = out.d2[k][l](j, i) = jet.hess(k, l);
        }
      }
    }
  }
  check_positive_definite(m, out.g);
  out.inverse = out.g.ldlt().solve(Matrix::Identity(n, n));
  return out;
}

MetricAt metric_at(const ChartedManifold& m, const Point& p) {
  m.check_admissible(p);
  const int n = m.dim();
  const Bindings b = m.bindings(p);
  Matrix g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) g(i, j) = g(j, i) = evaluate(m.metric_entry(i, j), b);
  }
  check_positive_definite(m, g);
  return {g, g.ldlt().solve(Matrix::Identity(n, n))};
}

namespace {

// Christoffel symbols of the first kind, first(l, i, j) = Gamma_{l ij}.
Tensor3 first_kind(const MetricJet& jet) {
  const int n = static_cast<int>(jet.g.rows());
  Tensor3 first(n);
  for (int l = 0; l < n; ++l) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        first(l, i, j) = 0.5 * (jet.d1[i](j, l) + jet.d1[j](i, l) - jet.d1[l](i, j));
      }
    }
  }
  return first;
}

Tensor3 raise(const Matrix& inverse, const Tensor3& first) {
  const int n = first.dim();
  Tensor3 out(n);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += inverse(k, l) * first(l, i, j);
        out(k, i, j) = s;
      }
    }
  }
  return out;
}

Tensor3 christoffel_from(const MetricJet& jet) { return raise(jet.inverse, first_kind(jet)); }

}  // namespace

Tensor3 christoffel_at(const ChartedManifold& m, const Point& p) {
  return christoffel_from(metric_jet_at(m, p, false));
}

CurvatureBundle curvature_at(const ChartedManifold& m, const Point& p) {
  const MetricJet jet = metric_jet_at(m, p, true);
  const int n = m.dim();
  const Tensor3 first = first_kind(jet);
  const Tensor3 gamma = raise(jet.inverse, first);

  // dgamma[mu](k, i, j) = d_mu Gamma^k_ij
  std::vector<Tensor3> dgamma(n, Tensor3(n));
  for (int mu = 0; mu < n; ++mu) {
    const Matrix dinv = -jet.inverse * jet.d1[mu] * jet.inverse;
    Tensor3 dfirst(n);
    for (int l = 0; l < n; ++l) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          dfirst(l, i, j) =
              0.5 * (jet.d2[mu][i](j, l) + jet.d2[mu][j](i, l) - jet.d2[mu][l](i, j));
        }
      }
    }
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int l = 0; l < n; ++l) {
            s += dinv(k, l) * first(l, i, j) + jet.inverse(k, l) * dfirst(l, i, j);
          }
          dgamma[mu](k, i, j) = s;
        }
      }
    }
  }

  CurvatureBundle out;
  out.metric = jet.g;
  out.inverse = jet.inverse;
  out.christoffel = gamma;
  out.riemann = Riemann(n);
  for (int l = 0; l < n; ++l) {
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          double s = dgamma[i](l, j, k) - dgamma[j](l, i, k);
          double scale = std::max(std::abs(dgamma[i](l, j, k)), std::abs(dgamma[j](l, i, k)));
          for (int q = 0; q < n; ++q) {
            const double a = gamma(l, i, q) * gamma(q, j, k);
            const double b = gamma(l, j, q) * gamma(q, i, k);
            s += a - b;
            scale = std::max({scale, std::abs(a), std::abs(b)});
          }
          out.riemann(l, k, i, j) = s;
          out.assembly_scale = std::max(out.assembly_scale, scale);
        }
      }
    }
  }
  out.ricci = Matrix::Zero(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      double s = 0.0;
      for (int c = 0; c < n; ++c) s += out.riemann(c, b, c, a);
      out.ricci(a, b) = s;
    }
  }
  out.scalar = (jet.inverse.cwiseProduct(out.ricci)).sum();
  return out;
}

TensorIdentityResiduals tensor_identity_residuals(const CurvatureBundle& c) {
  const int n = static_cast<int>(c.metric.rows());
  TensorIdentityResiduals r;
  double gmax = c.christoffel.max_abs();
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        r.christoffel_symmetry =
            std::max(r.christoffel_symmetry, std::abs(c.christoffel(k, i, j) - c.christoffel(k, j, i)));
      }
    }
  }
  r.christoffel_symmetry = scaled(r.christoffel_symmetry, gmax);

  // Fully lowered R_{lkij} = g_lm R^m_kij.
  Riemann low(n);
  for (int l = 0; l < n; ++l) {
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          double s = 0.0;
          for (int q = 0; q < n; ++q) s += c.metric(l, q) * c.riemann(q, k, i, j);
          low(l, k, i, j) = s;
        }
      }
    }
  }
  // A flat chart in curved coordinates has R ~ round-off of its terms.
  const double gnorm = c.metric.cwiseAbs().maxCoeff();
  const double rmax = std::max(low.max_abs(), c.assembly_scale * gnorm);
  for (int l = 0; l < n; ++l) {
    for (int k = 0; k < n; ++k) {
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          r.riemann_first_pair = std::max(r.riemann_first_pair, std::abs(low(l, k, i, j) + low(k, l, i, j)));
          r.riemann_second_pair = std::max(r.riemann_second_pair, std::abs(low(l, k, i, j) + low(l, k, j, i)));
          r.riemann_pair_swap = std::max(r.riemann_pair_swap, std::abs(low(l, k, i, j) - low(i, j, l, k)));
          r.first_bianchi = std::max(
              r.first_bianchi,
              std::abs(c.riemann(l, k, i, j) + c.riemann(l, i, j, k) + c.riemann(l, j, k, i)));
        }
      }
    }
  }
  r.riemann_first_pair = scaled(r.riemann_first_pair, rmax);
  r.riemann_second_pair = scaled(r.riemann_second_pair, rmax);
  r.riemann_pair_swap = scaled(r.riemann_pair_swap, rmax);
  r.first_bianchi = scaled(r.first_bianchi, std::max(c.riemann.max_abs(), c.assembly_scale));
  r.ricci_symmetry = scaled((c.ricci - c.ricci.transpose()).cwiseAbs().maxCoeff(),
                            std::max(c.ricci.cwiseAbs().maxCoeff(), c.assembly_scale));
  return r;
}

double metric_compatibility_residual_at(const ChartedManifold& m, const Point& p) {
  const MetricJet jet = metric_jet_at(m, p, false);
  const Tensor3 gamma = christoffel_from(jet);
  const int n = m.dim();
  double worst = 0.0;
  double norm = 0.0;
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double s = jet.d1[k](i, j);
        norm = std::max(norm, std::abs(s));
        for (int l = 0; l < n; ++l) {
          s -= gamma(l, k, i) * jet.g(l, j) + gamma(l, k, j) * jet.g(i, l);
        }
        worst = std::max(worst, std::abs(s));
      }
    }
  }
  return scaled(worst, norm);
}

// ---------------------------------------------------------------------------
// Scalar and vector field operators

TangentVector gradient_at(const ChartedManifold& m, const Expr& h, const Point& p) {
  const MetricAt g = metric_at(m, p);
  const Jet2 jet = eval_jet2(h, m.bindings(p), m.coordinates());
  Vector dh(m.dim());
  for (int i = 0; i < m.dim(); ++i) dh[i] = jet.grad(i);
  return {p, g.inverse * dh};
}

Matrix covariant_hessian_at(const ChartedManifold& m, const Expr& h, const Point& p) {
  const Tensor3 gamma = christoffel_at(m, p);
  const Jet2 jet = eval_jet2(h, m.bindings(p), m.coordinates());
  const int n = m.dim();
  Matrix out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = jet.hess(i, j);
      for (int k = 0; k < n; ++k) s -= gamma(k, i, j) * jet.grad(k);
      out(i, j) = s;
    }
  }
  return out;
}

double laplacian_at(const ChartedManifold& m, const Expr& h, const Point& p) {
  const MetricAt g = metric_at(m, p);
  return g.inverse.cwiseProduct(covariant_hessian_at(m, h, p)).sum();
}

Vector hessian_operator_apply(const ChartedManifold& m, const Expr& h, const Point& p,
                              const Vector& x) {
  const MetricAt g = metric_at(m, p);
  return g.inverse * (covariant_hessian_at(m, h, p) * x);
}

std::vector<Jet2> field_jets_at(const ChartedManifold& m, const VectorField& field,
                                const Point& p) {
  if (static_cast<int>(field.components.size()) != m.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "vector field has " + std::to_string(field.components.size()) +
                    " components on a manifold of dimension " + std::to_string(m.dim()));
  }
  const Bindings b = m.bindings(p);
  std::vector<Jet2> out;
  out.reserve(field.components.size());
  for (const Expr& c : field.components) out.push_back(eval_jet2(c, b, m.coordinates()));
  return out;
}

Matrix covariant_derivative_at(const ChartedManifold& m, const VectorField& field,
                               const Point& p) {
  const Tensor3 gamma = christoffel_at(m, p);
  const std::vector<Jet2> xi = field_jets_at(m, field, p);
  const int n = m.dim();
  Matrix out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = xi[i].grad(j);
      for (int k = 0; k < n; ++k) s += gamma(i, j, k) * xi[k].value();
      out(i, j) = s;
    }
  }
  return out;
}

Matrix lie_derivative_metric_at(const ChartedManifold& m, const VectorField& field,
                                const Point& p) {
  const MetricJet jet = metric_jet_at(m, p, false);
  const std::vector<Jet2> xi = field_jets_at(m, field, p);
  const int n = m.dim();
  Matrix out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) {
        s += xi[k].value() * jet.d1[k](i, j) + jet.g(k, j) * xi[k].grad(i) +
             jet.g(i, k) * xi[k].grad(j);
      }
      out(i, j) = out(j, i) = s;
    }
  }
  return out;
}

double divergence_along_frame(const ChartedManifold& m, const VectorField& field, const Point& p,
                              const std::vector<Vector>& frame) {
  const Matrix g = metric_at(m, p).g;
  const Matrix nabla = covariant_derivative_at(m, field, p);
  double s = 0.0;
  for (const Vector& e : frame) s += pair(g, nabla * e, e);
  return s;
}

double divergence_at(const ChartedManifold& m, const VectorField& field, const Point& p,
                     const std::optional<std::vector<int>>& restriction) {
  if (!restriction) return covariant_derivative_at(m, field, p).trace();
  const Matrix g = metric_at(m, p).g;
  const auto& idx = *restriction;
  std::vector<Vector> frame;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    if (idx[a] < 0 || idx[a] >= m.dim()) {
      throw Error(ErrorCode::InvalidArgument, "restriction index out of range");
    }
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      const double gab = g(idx[a], idx[b]);
      if (std::abs(gab) > 1e-10 * std::sqrt(g(idx[a], idx[a]) * g(idx[b], idx[b]))) {
        throw Error(ErrorCode::NotOrthogonal,
                    "coordinate directions " + std::to_string(idx[a]) + " and " +
                        std::to_string(idx[b]) + " are not orthogonal");
      }
    }
    Vector e = Vector::Zero(m.dim());
    e[idx[a]] = 1.0 / std::sqrt(g(idx[a], idx[a]));
    frame.push_back(e);
  }
  return divergence_along_frame(m, field, p, frame);
}

}  // namespace warpgeo
