#pragma once

#include <optional>
#include <string>
#include <vector>

#include "warpgeo/geometry.hpp"
#include "warpgeo/rmap.hpp"

namespace warpgeo {

struct GeodesicState {
  double t = 0.0;
  Point position;
  Vector velocity;
};

struct GeodesicTrace {
  std::vector<GeodesicState> states;
  std::vector<double> energy;                  // g(v, v) per state
  std::optional<std::vector<double>> clairaut; // r sin(theta) per state
  bool exited_domain = false;
  std::string stop_reason;
};

/// Classical RK4 on x' = v, v'^k = -Gamma^k_ij v^i v^j with fixed step.
/// Leaving the chart domain ends the trace early (exited_domain is set).
GeodesicTrace integrate_geodesic(const ChartedManifold& m, const GeodesicState& initial,
                                 double t_max, double step);

struct ClairautSeries {
  std::vector<double> values;
  double drift = 0.0;  // max |value - value(0)|
};

/// r sin(theta), theta the angle between the velocity and the horizontal
/// space of phi: sin^2(theta) = 1 - g(Hv, Hv) / g(v, v).
ClairautSeries clairaut_invariant(const GeodesicTrace& trace, const SmoothMap& phi,
                                  const Expr& r_field);

/// A curve point with its acceleration (second coordinate derivative).
struct CurveState {
  Point position;
  Vector velocity;
  Vector acceleration;
};

/// Accelerations by a fourth-order central difference of the velocities,
/// for the interior states of a uniformly sampled trace.
std::vector<CurveState> accelerations_from_trace(const GeodesicTrace& trace);

struct GeodesicResiduals {
  Vector vertical;    // V nabla_v v
  Vector horizontal;  // H nabla_v v
  double vertical_norm = 0.0;
  double horizontal_norm = 0.0;
};

GeodesicResiduals geodesic_residuals_at(const SmoothMap& phi, const CurveState& state);
GeodesicResiduals geodesic_residuals_at(const ProductMap& phi, const CurveState& state);

}  // namespace warpgeo
