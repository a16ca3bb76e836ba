#include "warpgeo/geodesic.hpp"

#include <algorithm>
#include <cmath>

namespace warpgeo {

namespace {

struct Derivative {
  Vector dx;
  Vector dv;
};

Derivative rhs(const ChartedManifold& m, const Vector& x, const Vector& v) {
  const Tensor3 gamma = christoffel_at(m, Point{x});
  return {v, -gamma.contract(v, v)};
}

}  // namespace

GeodesicTrace integrate_geodesic(const ChartedManifold& m, const GeodesicState& initial,
                                 double t_max, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "step must be positive");
  if (!(t_max > 0.0)) throw Error(ErrorCode::InvalidArgument, "t_max must be positive");
  if (initial.velocity.size() != m.dim() || initial.position.coords.size() != m.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "initial state does not match '" + m.name() + "'");
  }
  m.check_admissible(initial.position);

  GeodesicTrace trace;
  const auto record = [&](double t, const Vector& x, const Vector& v) {
    trace.states.push_back({t, Point{x}, v});
    trace.energy.push_back(pair(metric_at(m, Point{x}).g, v, v));
  };
  record(initial.t, initial.position.coords, initial.velocity);

  const auto full_steps = static_cast<long>(std::floor(t_max / step + 1e-9));
  Vector x = initial.position.coords;
  Vector v = initial.velocity;
  const double t0 = initial.t;
  const auto advance = [&](double h, double t_next) {
    const Derivative k1 = rhs(m, x, v);
    const Derivative k2 = rhs(m, x + 0.5 * h * k1.dx, v + 0.5 * h * k1.dv);
    const Derivative k3 = rhs(m, x + 0.5 * h * k2.dx, v + 0.5 * h * k2.dv);
    const Derivative k4 = rhs(m, x + h * k3.dx, v + h * k3.dv);
    const Vector xn = x + (h / 6.0) * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
    const Vector vn = v + (h / 6.0) * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
    m.check_admissible(Point{xn});
    x = xn;
    v = vn;
    record(t_next, x, v);
  };
  try {
    for (long k = 1; k <= full_steps; ++k) advance(step, t0 + static_cast<double>(k) * step);
    const double done = static_cast<double>(full_steps) * step;
    const double rest = t_max - done;
    if (rest > 1e-9 * step) advance(rest, t0 + t_max);
  } catch (const Error& e) {
    trace.exited_domain = true;
    trace.stop_reason = e.what();
  }
  return trace;
}

ClairautSeries clairaut_invariant(const GeodesicTrace& trace, const SmoothMap& phi,
                                  const Expr& r_field) {
  ClairautSeries out;
  for (const GeodesicState& s : trace.states) {
    const Matrix g = metric_at(phi.source(), s.position).g;
    const double vv = pair(g, s.velocity, s.velocity);
    if (!(vv > 0.0)) throw Error(ErrorCode::ZeroVelocity, "zero velocity at t = " + std::to_string(s.t));
    const DistributionSplit split = distribution_split_at(phi, s.position);
    const Vector hv = split.horizontal_projector * s.velocity;
    const double cos2 = std::clamp(pair(g, hv, hv) / vv, 0.0, 1.0);
    const double r = evaluate(r_field, phi.source().bindings(s.position));
    if (!(r > 0.0)) {
      throw Error(ErrorCode::DomainError, "r_field is not positive at t = " + std::to_string(s.t));
    }
    out.values.push_back(r * std::sqrt(1.0 - cos2));
  }
  for (double v : out.values) out.drift = std::max(out.drift, std::abs(v - out.values.front()));
  return out;
}

std::vector<CurveState> accelerations_from_trace(const GeodesicTrace& trace) {
  std::vector<CurveState> out;
  const auto& s = trace.states;
  if (s.size() < 5) return out;
  for (std::size_t i = 2; i + 2 < s.size(); ++i) {
    const double h = s[i + 1].t - s[i].t;
    // Skip stencils that touch the final partial step.
    if (std::abs((s[i + 2].t - s[i - 2].t) - 4.0 * h) > 1e-9 * h) continue;
    const Vector a = (-s[i + 2].velocity + 8.0 * s[i + 1].velocity - 8.0 * s[i - 1].velocity +
                      s[i - 2].velocity) /
                     (12.0 * h);
    out.push_back({s[i].position, s[i].velocity, a});
  }
  return out;
}

GeodesicResiduals geodesic_residuals_at(const SmoothMap& phi, const CurveState& state) {
  const ChartedManifold& m = phi.source();
  const Tensor3 gamma = christoffel_at(m, state.position);
  const Matrix g = metric_at(m, state.position).g;
  const Vector cov = state.acceleration + gamma.contract(state.velocity, state.velocity);
  const DistributionSplit split = distribution_split_at(phi, state.position);
  GeodesicResiduals out;
  out.vertical = split.vertical_projector * cov;
  out.horizontal = split.horizontal_projector * cov;
  out.vertical_norm = std::sqrt(std::max(0.0, pair(g, out.vertical, out.vertical)));
  out.horizontal_norm = std::sqrt(std::max(0.0, pair(g, out.horizontal, out.horizontal)));
  return out;
}

GeodesicResiduals geodesic_residuals_at(const ProductMap& phi, const CurveState& state) {
  return geodesic_residuals_at(phi.map, state);
}

}  // namespace warpgeo
