#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "warpgeo/geodesic.hpp"
#include "warpgeo/spec.hpp"

using namespace warpgeo;
using testsupport::vec;

namespace {

constexpr double kPi = std::numbers::pi;

const ChartedManifold& sphere() { return catalog().manifold("sphere"); }
const ChartedManifold& polar() { return catalog().manifold("polar"); }
const SmoothMap& polar_projection() { return catalog().smooth_map("polar_projection"); }

GeodesicState start(std::initializer_list<double> x, std::initializer_list<double> v) {
  return {0.0, Point{vec(x)}, vec(v)};
}

// Unit-sphere great circle through (1, 0, 0) with unit tangent u, in (theta, phi).
Vector great_circle(double t, const Eigen::Vector3d& u) {
  const Eigen::Vector3d q = std::cos(t) * Eigen::Vector3d(1, 0, 0) + std::sin(t) * u;
  return vec({std::acos(q.z()), std::atan2(q.y(), q.x())});
}

double max_energy_drift(const GeodesicTrace& tr) {
  double d = 0.0;
  for (double e : tr.energy) d = std::max(d, std::abs(e - tr.energy.front()));
  return d;
}

}  // namespace

TEST_CASE("Euclidean geodesics are straight lines") {
  const GeodesicTrace tr = integrate_geodesic(catalog().manifold("euclidean3"), start({1, 2, 3}, {0.5, -1, 2}), 3.0, 0.01);
  CHECK_FALSE(tr.exited_domain);
  for (const GeodesicState& s : tr.states) {
    CHECK((s.position.coords - (vec({1, 2, 3}) + s.t * vec({0.5, -1, 2}))).norm() < 1e-12);
    CHECK((s.velocity - vec({0.5, -1, 2})).norm() == 0.0);
  }
  CHECK(max_energy_drift(tr) == 0.0);
  CHECK(tr.states.back().t == doctest::Approx(3.0));
  for (std::size_t i = 1; i < tr.states.size(); ++i) CHECK(tr.states[i].t > tr.states[i - 1].t);
  CHECK(tr.energy.size() == tr.states.size());
}

TEST_CASE("sphere equator closes after one turn") {
  const GeodesicTrace tr = integrate_geodesic(sphere(), start({kPi / 2, 0}, {0, 1}), 2 * kPi, 1e-4);
  const Vector end = tr.states.back().position.coords;
  CHECK(tr.states.back().t == doctest::Approx(2 * kPi).epsilon(1e-14));
  CHECK(std::abs(end[0] - kPi / 2) < 1e-5);
  CHECK(std::abs(std::remainder(end[1], 2 * kPi)) < 1e-5);
  CHECK(max_energy_drift(tr) < 1e-8);
}

TEST_CASE("oblique great circle: energy and convergence order") {
  const Eigen::Vector3d u(0, 0.8, -0.6);
  const GeodesicState s0 = start({kPi / 2, 0}, {0.6, 0.8});
  const GeodesicTrace fine = integrate_geodesic(sphere(), s0, 2 * kPi, 1e-4);
  CHECK(max_energy_drift(fine) < 1e-8);
  const Vector end = fine.states.back().position.coords;
  CHECK(std::abs(end[0] - kPi / 2) < 1e-5);
  CHECK(std::abs(std::remainder(end[1], 2 * kPi)) < 1e-5);

  const auto error = [&](double h) {
    const GeodesicTrace tr = integrate_geodesic(sphere(), s0, 1.0, h);
    return (tr.states.back().position.coords - great_circle(tr.states.back().t, u)).norm();
  };
  const double ratio = error(0.02) / error(0.01);
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("polar geodesics are Cartesian straight lines with constant Clairaut value") {
  for (int k = 1; k <= 8; ++k) {
    const double a = 0.35 * k;
    const GeodesicTrace tr = integrate_geodesic(polar(), start({1, 0}, {std::cos(a), std::sin(a)}), 10.0, 1e-3);
    REQUIRE_FALSE(tr.exited_domain);
    double deviation = 0.0;
    for (const GeodesicState& s : tr.states) {
      const double r = s.position.coords[0], th = s.position.coords[1];
      const Eigen::Vector2d xy(r * std::cos(th), r * std::sin(th));
      const Eigen::Vector2d line = Eigen::Vector2d(1, 0) + s.t * Eigen::Vector2d(std::cos(a), std::sin(a));
      deviation = std::max(deviation, (xy - line).norm());
    }
    CHECK(deviation < 1e-6);
    CHECK(max_energy_drift(tr) < 1e-8);

    const ClairautSeries c = clairaut_invariant(tr, polar_projection(), parse("r", {"r", "t"}));
    CHECK(c.drift < 1e-6);
    for (double v : c.values) CHECK(std::abs(v - std::abs(std::sin(a))) < 1e-6);
  }
}

TEST_CASE("Clairaut invariant on trivial products") {
  const ChartedManifold& plane = catalog().manifold("euclidean2");
  const SmoothMap px = SmoothMap::from_strings("px", plane, catalog().manifold("radial"), {"1 + x^2"});
  const GeodesicTrace vertical = integrate_geodesic(plane, start({0, 0}, {0, 1}), 1.0, 0.1);
  for (double v : clairaut_invariant(vertical, px, parse("2", {"x", "y"})).values) CHECK(v == doctest::Approx(2.0));
  const ClairautSeries along = clairaut_invariant(vertical, px, parse("1 + y^2", {"x", "y"}));
  CHECK(along.drift == doctest::Approx(1.0));
  const GeodesicTrace horizontal = integrate_geodesic(plane, start({0.2, 0}, {1, 0}), 1.0, 0.1);
  for (double v : clairaut_invariant(horizontal, px, parse("2", {"x", "y"})).values) CHECK(std::abs(v) < 1e-7);
}

TEST_CASE("projected residuals") {
  const GeodesicTrace tr = integrate_geodesic(polar(), start({1, 0}, {0.6, 0.8}), 2.0, 1e-3);
  const std::vector<CurveState> states = accelerations_from_trace(tr);
  REQUIRE(states.size() > 100);
  for (const CurveState& s : states) {
    const GeodesicResiduals r = geodesic_residuals_at(polar_projection(), s);
    CHECK(r.vertical_norm < 1e-6);
    CHECK(r.horizontal_norm < 1e-6);
  }

  // circle of constant radius: nabla_v v = -r w^2 d_r, horizontal for the radial projection
  const double r = 1.5, w = 0.7;
  const GeodesicResiduals c = geodesic_residuals_at(polar_projection(), {Point{vec({r, 0.4})}, vec({0, w}), vec({0, 0})});
  CHECK(c.horizontal_norm == doctest::Approx(r * w * w).epsilon(1e-12));
  CHECK(c.horizontal[0] == doctest::Approx(-r * w * w).epsilon(1e-12));
  CHECK(c.vertical_norm < 1e-12);
}

TEST_CASE("projected residuals on a product map") {
  const ChartedManifold m1 = ChartedManifold::from_diagonal(
      "M1", {"x1", "x2", "x3", "x4"}, {"exp(-2*x3)", "exp(-2*x3)", "1", "1"}, {"x3^2"});
  const ChartedManifold e4 = ChartedManifold::from_diagonal("N1", {"y1", "y2", "y3", "y4"}, {"1", "1", "1", "1"});
  const ChartedManifold m2 = ChartedManifold::from_diagonal("M2", {"x5", "x6"}, {"1", "1"});
  const ChartedManifold n2 = ChartedManifold::from_diagonal("N2", {"y5", "y6"}, {"1", "1"});
  const SmoothMap phi1 = SmoothMap::from_strings("phi1", m1, e4, {"0", "0", "exp(x3)*cos(x4)", "exp(x3)*sin(x4)"});
  const SmoothMap phi2 = SmoothMap::from_strings("phi2", m2, n2, {"(x5 + x6)/sqrt(2)", "0"});
  const ProductMap phi = product_map_build("phi", phi1, phi2, "x3", "1");
  const GeodesicTrace tr = integrate_geodesic(phi.source.charted(), start({0.5, 0.5, 1, 0.3, 0, 0}, {0.2, -0.1, 0.3, 0.5, 0.4, -0.2}), 0.5, 1e-3);
  REQUIRE_FALSE(tr.exited_domain);
  for (const CurveState& s : accelerations_from_trace(tr)) {
    const GeodesicResiduals r = geodesic_residuals_at(phi, s);
    CHECK(r.vertical_norm < 1e-6);
    CHECK(r.horizontal_norm < 1e-6);
  }
}

TEST_CASE("errors and domain exit") {
  CHECK_THROWS_AS(integrate_geodesic(polar(), start({1, 0}, {0, 1}), 1.0, 0.0), Error);
  CHECK_THROWS_AS(integrate_geodesic(polar(), start({1, 0}, {0, 1}), -1.0, 0.1), Error);
  CHECK_THROWS_AS(integrate_geodesic(polar(), start({1, 0}, {0, 1, 2}), 1.0, 0.1), Error);

  const GeodesicTrace still = integrate_geodesic(polar(), start({1, 0}, {0, 0}), 1.0, 0.1);
  try {
    (void)clairaut_invariant(still, polar_projection(), parse("r", {"r", "t"}));
    FAIL("zero velocity accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroVelocity);
  }

  const GeodesicTrace inward = integrate_geodesic(polar(), start({1, 0}, {-1, 0}), 3.0, 1e-3);
  CHECK(inward.exited_domain);
  CHECK_FALSE(inward.stop_reason.empty());
  CHECK(inward.states.back().t < 1.0);
  CHECK(inward.states.back().position.coords[0] > 0.0);
}
