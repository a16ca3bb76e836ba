#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "warpgeo/expr.hpp"
#include "warpgeo/linalg.hpp"

namespace warpgeo {

struct Point {
  Vector coords;
};

struct TangentVector {
  Point base;
  Vector components;
};

/// Vector field given by one expression per coordinate direction.
struct VectorField {
  std::vector<Expr> components;
};

/// Closed coordinate interval used for randomized point sampling.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// A single coordinate chart carrying a Riemannian metric given by
/// expressions in the coordinates (and optional named parameters).
///
/// Only the upper triangle of the metric is stored, so symmetry holds by
/// construction. Immutable after construction.
class ChartedManifold {
 public:
  ChartedManifold() = default;

  /// `upper` holds the n(n+1)/2 upper-triangle entries in row-major order.
  ChartedManifold(std::string name, std::vector<std::string> coordinates, std::vector<Expr> upper,
                  std::vector<Expr> constraints = {}, Bindings parameters = {});

  /// Parses entries given as a full n x n grid of strings (the lower triangle
  /// must parse to the same tree as the upper one) or as a diagonal.
  static ChartedManifold from_strings(std::string name, std::vector<std::string> coordinates,
                                      const std::vector<std::vector<std::string>>& metric,
                                      const std::vector<std::string>& constraints = {},
                                      Bindings parameters = {});
  static ChartedManifold from_diagonal(std::string name, std::vector<std::string> coordinates,
                                       const std::vector<std::string>& diagonal,
                                       const std::vector<std::string>& constraints = {},
                                       Bindings parameters = {});

  const std::string& name() const noexcept { return name_; }
  int dim() const noexcept { return static_cast<int>(coordinates_.size()); }
  const std::vector<std::string>& coordinates() const noexcept { return coordinates_; }
  const Expr& metric_entry(int i, int j) const;
  const std::vector<Expr>& constraints() const noexcept { return constraints_; }
  const Bindings& parameters() const noexcept { return parameters_; }

  /// Names an expression on this chart may reference.
  std::vector<std::string> symbol_names() const;

  const std::optional<std::vector<Interval>>& box() const noexcept { return box_; }
  void set_box(std::vector<Interval> box);

  Bindings bindings(const Point& p) const;
  /// Throws OutsideDomain when a constraint is not strictly positive.
  void check_admissible(const Point& p) const;
  bool admissible(const Point& p) const noexcept;

  /// Submanifold chart over the coordinates in `keep`, the remaining
  /// coordinates frozen at their values in `p`.
  ChartedManifold coordinate_slice(std::span<const int> keep, const Point& p) const;

 private:
  std::string name_;
  std::vector<std::string> coordinates_;
  std::vector<Expr> upper_;
  std::vector<Expr> constraints_;
  Bindings parameters_;
  std::optional<std::vector<Interval>> box_;
};

struct MetricAt {
  Matrix g;
  Matrix inverse;
};

/// Metric with exact first (and optionally second) coordinate derivatives.
struct MetricJet {
  Matrix g;
  Matrix inverse;
  std::vector<Matrix> d1;               // d1[k](i, j) = d_k g_ij
  std::vector<std::vector<Matrix>> d2;  // d2[k][l](i, j) = d_k d_l g_ij
};

/// Riemann tensor R^l_{kij}, defined by R(d_i, d_j) d_k = R^l_{kij} d_l with
/// R(X, Y) Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z.
class Riemann {
 public:
  Riemann() = default;
  explicit Riemann(int n) : n_(n), data_(static_cast<std::size_t>(n) * n * n * n, 0.0) {}

  int dim() const noexcept { return n_; }
  double& operator()(int l, int k, int i, int j) { return data_[index(l, k, i, j)]; }
  double operator()(int l, int k, int i, int j) const { return data_[index(l, k, i, j)]; }

  /// R(X, Y) Z.
  Vector apply(const Vector& x, const Vector& y, const Vector& z) const;
  double max_abs() const;

 private:
  std::size_t index(int l, int k, int i, int j) const {
    return ((static_cast<std::size_t>(l) * n_ + k) * n_ + i) * n_ + j;
  }

  int n_ = 0;
  std::vector<double> data_;
};

struct CurvatureBundle {
  Matrix metric;
  Matrix inverse;
  Tensor3 christoffel;  // christoffel(k, i, j) = Gamma^k_ij
  Riemann riemann;
  Matrix ricci;  // Ric(X, Y) = trace(Z -> R(Z, X) Y)
  double scalar = 0.0;
  // Largest term R was summed from; the round-off scale when R cancels to ~0.
  double assembly_scale = 0.0;
};

/// Relative residuals of the algebraic tensor identities, each scaled by the
/// max-norm of the tensor involved (absolute floor 1e-12).
struct TensorIdentityResiduals {
  double christoffel_symmetry = 0.0;
  double riemann_first_pair = 0.0;
  double riemann_second_pair = 0.0;
  double riemann_pair_swap = 0.0;
  double first_bianchi = 0.0;
  double ricci_symmetry = 0.0;

  double max() const;
};

MetricAt metric_at(const ChartedManifold& m, const Point& p);
MetricJet metric_jet_at(const ChartedManifold& m, const Point& p, bool second_order);

Tensor3 christoffel_at(const ChartedManifold& m, const Point& p);
CurvatureBundle curvature_at(const ChartedManifold& m, const Point& p);
TensorIdentityResiduals tensor_identity_residuals(const CurvatureBundle& c);
/// max |d_k g_ij - Gamma^l_ki g_lj - Gamma^l_kj g_il|, relative to max |dg|.
double metric_compatibility_residual_at(const ChartedManifold& m, const Point& p);

TangentVector gradient_at(const ChartedManifold& m, const Expr& h, const Point& p);
Matrix covariant_hessian_at(const ChartedManifold& m, const Expr& h, const Point& p);
double laplacian_at(const ChartedManifold& m, const Expr& h, const Point& p);

/// Coordinate values and first/second partials of each field component.
std::vector<Jet2> field_jets_at(const ChartedManifold& m, const VectorField& field, const Point& p);
/// (i, j) entry = nabla_j xi^i.
Matrix covariant_derivative_at(const ChartedManifold& m, const VectorField& field, const Point& p);
Matrix lie_derivative_metric_at(const ChartedManifold& m, const VectorField& field,
                                const Point& p);
/// Full divergence, or the trace over the orthonormal subframe of the
/// coordinate directions in `restriction` (which must be g-orthogonal at p).
double divergence_at(const ChartedManifold& m, const VectorField& field, const Point& p,
                     const std::optional<std::vector<int>>& restriction = std::nullopt);
/// sum_a g(nabla_{e_a} xi, e_a) over a g-orthonormal list of vectors.
double divergence_along_frame(const ChartedManifold& m, const VectorField& field, const Point& p,
                              const std::vector<Vector>& frame);

/// nabla_X grad h = g^-1 H^h X.
Vector hessian_operator_apply(const ChartedManifold& m, const Expr& h, const Point& p,
                              const Vector& x);

}  // namespace warpgeo
