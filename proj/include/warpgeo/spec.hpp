#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "warpgeo/geometry.hpp"
#include "warpgeo/rmap.hpp"
#include "warpgeo/warped.hpp"

namespace warpgeo {

/// Expected Christoffel symbol Gamma^k_ij, indices 1-based as written.
struct ExpectedSymbol {
  int k = 0;
  int i = 0;
  int j = 0;
  Expr value;
};

struct TaskSpec {
  std::string id;
  std::string kind;
  std::string subject;  // manifold, warped product or map name
  std::vector<Point> points;
  std::optional<double> tolerance;

  // christoffel
  std::vector<ExpectedSymbol> expected_symbols;
  std::optional<double> zero_tolerance;
  // conformality, umbilicity
  std::optional<Expr> expected_dilation;
  std::vector<Expr> expected_mean_curvature;
  std::optional<double> isometry_tolerance;
  // geodesic
  Vector velocity;
  double t_max = 0.0;
  double step = 0.0;
  std::optional<std::string> map;
  std::optional<Expr> r_field;
  std::optional<double> residual_tolerance;
  // soliton, bochner, split_operators
  std::optional<VectorField> field;
  double coefficient = 0.0;
  std::optional<Expr> scalar;
};

struct RunSpec {
  std::uint64_t seed = 0;
  std::map<std::string, ChartedManifold> manifolds;
  std::map<std::string, WarpedProduct> warped_products;
  std::map<std::string, SmoothMap> maps;
  std::map<std::string, ProductMap> product_maps;
  std::vector<TaskSpec> tasks;

  /// A plain manifold, or the product chart of a warped product.
  const ChartedManifold& manifold(const std::string& name) const;
  /// A plain map, or the assembled map of a product map.
  const SmoothMap& smooth_map(const std::string& name) const;
  const ProductMap& product_map(const std::string& name) const;
  bool has_manifold(const std::string& name) const;
  bool has_map(const std::string& name) const;
};

/// Task kinds understood by the runner.
const std::vector<std::string>& task_kinds();

RunSpec load_spec(const std::filesystem::path& path);
/// `origin` names the source in error messages.
RunSpec load_spec_text(std::string_view text, const std::string& origin = "<string>");

/// Specification of the built-in manifolds and maps (euclidean2, euclidean3,
/// polar, sphere, hyperbolic, polar_projection, ...).
const RunSpec& catalog();
std::string_view catalog_text();

}  // namespace warpgeo
