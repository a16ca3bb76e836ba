#pragma once

#include <optional>
#include <string_view>

#include "warpgeo/geometry.hpp"
#include "warpgeo/rmap.hpp"

namespace warpgeo {

/// Potential field and soliton constant c in 1/2 L_xi g + Ric + c g = 0.
struct SolitonConfig {
  VectorField potential;
  double coefficient = 0.0;
};

enum class SolitonKind { Expanding, Steady, Shrinking };

std::string_view soliton_kind_name(SolitonKind kind);
SolitonKind classify_soliton(double coefficient);

struct SolitonResidual {
  Matrix residual;
  double max_norm = 0.0;
  SolitonKind classification = SolitonKind::Steady;
  /// -trace_g(1/2 L_xi g + Ric) / n: the pointwise constant that fits best.
  double best_fit_coefficient = 0.0;
};

SolitonResidual soliton_residual_at(const ChartedManifold& m, const SolitonConfig& cfg,
                                    const Point& p);

/// Traces of nabla xi and of the Hessian of h over the vertical and the
/// horizontal orthonormal frames of phi, plus the unrestricted values.
struct SplitOperators {
  double div_vertical = 0.0;
  double div_horizontal = 0.0;
  double laplacian_vertical = 0.0;
  double laplacian_horizontal = 0.0;
  double divergence = 0.0;
  double laplacian = 0.0;
};

/// xi defaults to grad h, in which case divergence and Laplacian coincide.
SplitOperators split_operators_at(const SmoothMap& phi, const Expr& h, const Point& p,
                                  const std::optional<VectorField>& xi = std::nullopt);

struct BochnerLhs {
  Vector divergence;  // (Div L_V g)_j = g^{ik} nabla_k (L_V g)_{ij}
  double value = 0.0; // (Div L_V g)(V)
};

BochnerLhs bochner_lhs_at(const ChartedManifold& m, const VectorField& v, const Point& p);

}  // namespace warpgeo
