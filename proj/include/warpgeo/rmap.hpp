#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "warpgeo/geometry.hpp"
#include "warpgeo/warped.hpp"

namespace warpgeo {

/// Smooth map between two charts, one component expression per target
/// coordinate, written in the source coordinates and parameters.
class SmoothMap {
 public:
  SmoothMap() = default;
  SmoothMap(std::string name, ChartedManifold source, ChartedManifold target,
            std::vector<Expr> components);
  static SmoothMap from_strings(std::string name, ChartedManifold source, ChartedManifold target,
                                const std::vector<std::string>& components);

  const std::string& name() const noexcept { return name_; }
  const ChartedManifold& source() const noexcept { return source_; }
  const ChartedManifold& target() const noexcept { return target_; }
  const std::vector<Expr>& components() const noexcept { return components_; }

  /// phi(p); throws OutsideDomain when the image is not admissible.
  Point image(const Point& p) const;

 private:
  std::string name_;
  ChartedManifold source_;
  ChartedManifold target_;
  std::vector<Expr> components_;
};

/// (a, i) entry = d phi^a / d x^i.
Matrix differential_at(const SmoothMap& phi, const Point& p);

constexpr double kDefaultRankTolerance = 1e-8;

struct DistributionSplit {
  Point at;
  std::vector<Vector> vertical_basis;    // g-orthonormal, spans ker phi_*
  std::vector<Vector> horizontal_basis;  // g-orthonormal complement
  int rank = 0;
  Vector singular_values;                // in orthonormal frames, descending
  Matrix vertical_projector;             // g-orthogonal projector onto ker phi_*
  Matrix horizontal_projector;
};

DistributionSplit distribution_split_at(const SmoothMap& phi, const Point& p,
                                        double rank_tolerance = kDefaultRankTolerance);

struct ConformalityReport {
  double dilation_squared = 0.0;
  double conformal_defect = 0.0;
  double isometry_defect = 0.0;

  double dilation() const { return std::sqrt(dilation_squared); }
};

ConformalityReport conformality_report_at(const SmoothMap& phi, const Point& p);

/// How split bases are extended to local fields before differentiating.
enum class FrameExtension {
  Projector,  // V F(x) = P_V(x) F, with dP_V by finite differences
  GramSchmidt // Gram-Schmidt of P(x) applied to the frame at p, scaled by a non-constant factor
};

/// O'Neill tensors as coordinate tensors: T(k, i, j) = (T_{d_i} d_j)^k.
struct ONeillTensors {
  Tensor3 T;
  Tensor3 A;
  DistributionSplit split;

  Vector T_apply(const Vector& e, const Vector& f) const { return T.contract(e, f); }
  Vector A_apply(const Vector& e, const Vector& f) const { return A.contract(e, f); }
};

ONeillTensors oneill_tensors_at(const SmoothMap& phi, const Point& p,
                                FrameExtension extension = FrameExtension::Projector,
                                double rank_tolerance = kDefaultRankTolerance);

struct SecondFundamentalForm {
  std::vector<Matrix> coordinate;          // coordinate[a](i, j) = (nabla phi_*)^a_ij
  std::vector<std::vector<Vector>> table;  // table[a][b] = (nabla phi_*)(e_a, e_b), horizontal basis
  Vector tension;                          // trace over the horizontal basis
  DistributionSplit split;

  Vector apply(const Vector& x, const Vector& y) const;
};

SecondFundamentalForm second_fundamental_form_at(const SmoothMap& phi, const Point& p);

struct FiberGeometry {
  Vector mean_curvature;
  double umbilicity_residual = 0.0;
  /// Coordinate indices spanning the fiber when it is coordinate-aligned.
  std::optional<std::vector<int>> aligned_coordinates;
  std::optional<CurvatureBundle> fiber_curvature;
  std::string alignment_error;
  ONeillTensors oneill;
};

FiberGeometry fiber_geometry_at(const SmoothMap& phi, const Point& p);

/// phi1 x phi2 : M1 x_f M2 -> N1 x_rho N2.
struct ProductMap {
  WarpedProduct source;
  WarpedProduct target;
  SmoothMap first;
  SmoothMap second;
  SmoothMap map;  // on the product charts

  Point base_point(const Point& p) const { return source.base_point(p); }
  Point fiber_point(const Point& p) const { return source.fiber_point(p); }
};

ProductMap product_map_build(std::string name, const SmoothMap& phi1, const SmoothMap& phi2,
                             const Expr& f, const Expr& rho);
ProductMap product_map_build(std::string name, const SmoothMap& phi1, const SmoothMap& phi2,
                             std::string_view f, std::string_view rho);

struct ClairautCheck {
  double residual = 0.0;                  // max of the three parts below
  double first_umbilicity = 0.0;          // umbilicity of phi1 fibers
  double second_geodesic = 0.0;           // max |T2(u, v)| over phi2 vertical pairs
  double fiber_mean_curvature = 0.0;      // |H over phi2 vertical lifts + grad ln f|
  double full_mean_curvature = 0.0;       // |H + grad ln f| with H over the whole vertical space
  Vector mean_curvature;                  // whole-map H
  Vector grad_ln_f;
};

ClairautCheck clairaut_check_at(const ProductMap& phi, const Point& p);

struct ConformalIdentities {
  double dilation_squared_first = 0.0;
  double dilation_squared_second = 0.0;
  double dilation_mismatch = 0.0;  // |lambda1^2 - lambda2^2|
  int rank_first = 0;
  int rank_second = 0;
  double rho_at_image = 0.0;
  double hilbert_schmidt = 0.0;  // |phi_*|^2
  double rank_identity_residual = 0.0;
  double a_formula_residual = 0.0;
  std::optional<double> scalar_first_residual;
  std::optional<double> scalar_second_residual;
  double scalar_vertical_first = 0.0;
  double scalar_vertical_second = 0.0;
  std::string scalar_note;
};

ConformalIdentities conformal_identities_at(const ProductMap& phi, const Point& p);

struct RicciTerm {
  std::string name;
  double value = 0.0;
  bool included = true;  // false for printed variants shown alongside the corrected term
};

struct RicciItem {
  std::string item;
  double lhs = 0.0;
  std::vector<RicciTerm> terms;
  double rhs_computed = 0.0;
  std::vector<std::string> uncomputed;
};

struct RicciDecomposition {
  double mixed_max = 0.0;  // item (vii): largest mixed base/fiber Ricci entry
  std::vector<RicciItem> items;
};

RicciDecomposition ricci_decomposition_at(const ProductMap& phi, const Point& p);

/// The horizontal grouping for vertical velocity U = U1 + U2:
/// |H nabla_U U - (T1(U1, U1) + T2(U2, U2) - g(U2, U2) H grad ln f)|.
double vertical_velocity_grouping_residual(const ProductMap& phi, const Point& p, const Vector& u);

}  // namespace warpgeo
