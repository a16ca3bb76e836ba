#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "warpgeo/rmap.hpp"

using namespace warpgeo;
using testsupport::vec;

namespace {

ChartedManifold euclid(const std::string& name, const std::vector<std::string>& coords) {
  return ChartedManifold::from_diagonal(name, coords, std::vector<std::string>(coords.size(), "1"));
}

ChartedManifold m1_36() {
  ChartedManifold m = ChartedManifold::from_diagonal(
      "M1", {"x1", "x2", "x3", "x4"}, {"exp(-2*x3)", "exp(-2*x3)", "1", "1"}, {"x1^2", "x2^2", "x3^2", "x4^2"});
  m.set_box({{0.1, 2}, {0.1, 2}, {0.1, 1.5}, {0.1, 1.4}});
  return m;
}

SmoothMap phi1_36() {
  return SmoothMap::from_strings("phi1", m1_36(), euclid("N1", {"y1", "y2", "y3", "y4"}),
                                 {"0", "0", "exp(x3)*cos(x4)", "exp(x3)*sin(x4)"});
}

SmoothMap phi2_36() {
  ChartedManifold m2 = euclid("M2", {"x5", "x6"});
  m2.set_box({{-2, 2}, {-2, 2}});
  return SmoothMap::from_strings("phi2", m2, euclid("N2", {"y5", "y6"}), {"(x5 + x6)/sqrt(2)", "0"});
}

ProductMap phi_36(const std::string& f = "1") { return product_map_build("phi", phi1_36(), phi2_36(), f, "1"); }

SmoothMap phi1_47() {
  ChartedManifold m = ChartedManifold::from_diagonal("M1", {"x1", "x2"}, {"exp(4)", "exp(4)"});
  return SmoothMap::from_strings("phi1", m, euclid("N1", {"y1", "y2"}), {"(x1 - x2)/sqrt(2)", "0"});
}

SmoothMap phi2_47(const std::string& scale) {
  ChartedManifold m = ChartedManifold::from_diagonal("M2", {"u1", "u2"}, {scale, scale});
  return SmoothMap::from_strings("phi2", m, euclid("N2", {"v1", "v2"}), {"sin(u1)", "cos(u1)"});
}

SmoothMap projection2to1() {
  return SmoothMap::from_strings("pr", euclid("R2", {"a", "b"}), euclid("R1", {"s"}), {"a"});
}

Point p36() { return Point{vec({0.7, 1.1, 0.4, 0.9})}; }

std::vector<Point> sample(const ChartedManifold& m, int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::vector<Point> out;
  for (int i = 0; i < n; ++i) out.push_back(testsupport::random_point(rng, m));
  return out;
}

// Span check: every vector of `a` lies in span(b) (b orthonormal w.r.t. g).
double span_defect(const std::vector<Vector>& a, const std::vector<Vector>& b, const Matrix& g) {
  double worst = 0.0;
  for (const Vector& v : a) {
    Vector r = v;
    for (const Vector& e : b) r -= pair(g, e, v) * e;
    worst = std::max(worst, r.norm());
  }
  return worst;
}

double distance(const Tensor3& a, const Tensor3& b) {
  double worst = 0.0;
  for (int k = 0; k < a.dim(); ++k)
    for (int i = 0; i < a.dim(); ++i)
      for (int j = 0; j < a.dim(); ++j) worst = std::max(worst, std::abs(a(k, i, j) - b(k, i, j)));
  return worst;
}

}  // namespace

TEST_CASE("differential examples") {
  const SmoothMap id = SmoothMap::from_strings("id", euclid("A", {"a", "b"}), euclid("B", {"c", "d"}), {"a", "b"});
  CHECK(differential_at(id, Point{vec({0.3, 0.2})}).isApprox(Matrix::Identity(2, 2)));

  const SmoothMap f1 = SmoothMap::from_strings("f1", euclid("A", {"x1", "x2", "x3", "x4"}),
                                               euclid("N1", {"y1", "y2", "y3", "y4"}),
                                               {"0", "0", "exp(x3)*cos(x4)", "exp(x3)*sin(x4)"});
  Matrix expected = Matrix::Zero(4, 4);
  expected(2, 2) = 1;
  expected(3, 3) = 1;
  CHECK(differential_at(f1, Point{Vector::Zero(4)}).isApprox(expected));

  const Matrix d2 = differential_at(phi2_36(), Point{vec({0.5, -1})});
  CHECK(d2(0, 0) == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(d2(0, 1) == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(d2.row(1).isZero());
}

TEST_CASE("distribution split") {
  const Point p = p36();
  const DistributionSplit s1 = distribution_split_at(phi1_36(), p);
  CHECK(s1.rank == 2);
  REQUIRE(s1.vertical_basis.size() == 2);
  const Matrix g = metric_at(phi1_36().source(), p).g;
  const double e = std::exp(p.coords[2]);
  CHECK(span_defect({vec({e, 0, 0, 0}), vec({0, e, 0, 0})}, s1.vertical_basis, g) < 1e-12);
  CHECK(span_defect(s1.vertical_basis, {vec({e, 0, 0, 0}), vec({0, e, 0, 0})}, g) < 1e-12);
  for (const Vector& u : s1.vertical_basis)
    for (const Vector& x : s1.horizontal_basis) CHECK(std::abs(pair(g, u, x)) < 1e-12);

  const DistributionSplit s2 = distribution_split_at(phi2_36(), Point{vec({0.2, 0.3})});
  CHECK(s2.rank == 1);
  REQUIRE(s2.vertical_basis.size() == 1);
  CHECK(span_defect({vec({1, -1}) / std::sqrt(2.0)}, s2.vertical_basis, Matrix::Identity(2, 2)) < 1e-12);

  const SmoothMap id = SmoothMap::from_strings("id", euclid("A", {"a", "b"}), euclid("B", {"c", "d"}), {"a", "b"});
  const DistributionSplit si = distribution_split_at(id, Point{vec({0.3, 0.2})});
  CHECK(si.vertical_basis.empty());
  CHECK(si.rank == 2);
  CHECK(si.vertical_projector.isZero());
}

TEST_CASE("ambiguous rank is reported") {
  const SmoothMap near = SmoothMap::from_strings("near", euclid("A", {"a", "b"}), euclid("B", {"c", "d"}),
                                                 {"a", "1e-9*b"});
  try {
    (void)distribution_split_at(near, Point{vec({0.1, 0.1})}, 1e-8);
    FAIL("ambiguous rank accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AmbiguousRank);
  }
}

TEST_CASE("conformality") {
  for (const Point& p : sample(m1_36(), 5, 1)) {
    const ConformalityReport r = conformality_report_at(phi1_36(), p);
    // the dilation is e^{x3}; the map is horizontally conformal but not isometric
    CHECK(r.dilation() == doctest::Approx(std::exp(p.coords[2])).epsilon(1e-12));
    CHECK(r.conformal_defect < 1e-12);
    CHECK(r.isometry_defect >= 0.0);
  }
  const ConformalityReport r2 = conformality_report_at(phi2_36(), Point{vec({0.4, -0.3})});
  CHECK(r2.dilation_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r2.isometry_defect < 1e-10);

  const ConformalityReport c1 = conformality_report_at(phi1_47(), Point{vec({0.5, 1.5})});
  CHECK(c1.dilation() == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(c1.conformal_defect < 1e-12);
  const ConformalityReport printed = conformality_report_at(phi2_47("exp(2)"), Point{vec({0.5, 1.5})});
  CHECK(printed.dilation() == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(std::abs(printed.dilation() - std::exp(-2.0)) > 0.1);
  const ConformalityReport corrected = conformality_report_at(phi2_47("exp(4)"), Point{vec({0.5, 1.5})});
  CHECK(corrected.dilation() == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
}

TEST_CASE("rescaling the source by the dilation gives an isometry") {
  const SmoothMap scaled = SmoothMap::from_strings(
      "scaled", ChartedManifold::from_diagonal("M1", {"x1", "x2"}, {"exp(4)*exp(-4)", "exp(4)*exp(-4)"}),
      euclid("N1", {"y1", "y2"}), {"(x1 - x2)/sqrt(2)", "0"});
  std::mt19937_64 rng(5);
  for (int i = 0; i < 5; ++i) {
    const Point p = testsupport::random_point(rng, 2, 0.2, 2);
    CHECK(conformality_report_at(phi1_47(), p).isometry_defect > 0.5);
    CHECK(conformality_report_at(scaled, p).isometry_defect < 1e-10);
  }
}

TEST_CASE("O'Neill tensors on examples") {
  const ONeillTensors pr = oneill_tensors_at(projection2to1(), Point{vec({0.3, 0.4})});
  CHECK(pr.T.max_abs() < 1e-10);
  CHECK(pr.A.max_abs() < 1e-10);

  for (const Point& p : sample(m1_36(), 5, 2)) {
    const ONeillTensors o = oneill_tensors_at(phi1_36(), p);
    const double e = std::exp(p.coords[2]);
    for (const Vector& u : {vec({e, 0, 0, 0}), vec({0, e, 0, 0})})
      CHECK(testsupport::rel_err(o.T_apply(u, u), vec({0, 0, 1, 0})) < 1e-8);
  }
  const ONeillTensors o2 = oneill_tensors_at(phi2_36(), Point{vec({0.4, 1.2})});
  CHECK(o2.T.max_abs() < 1e-10);
}

TEST_CASE("O'Neill tensor symmetries hold on example maps") {
  struct Case {
    SmoothMap map;
    std::vector<Point> points;
  };
  std::vector<Case> cases{{phi1_36(), sample(m1_36(), 4, 3)},
                          {phi2_36(), {Point{vec({0.1, 0.2})}, Point{vec({-1.5, 1})}}},
                          {phi1_47(), {Point{vec({0.5, 1.5})}}},
                          {phi2_47("exp(4)"), {Point{vec({0.3, -0.7})}}},
                          {phi_36().map, {Point{vec({0.7, 1.1, 0.4, 0.9, 0.5, -0.5})}}}};
  for (const Case& c : cases) {
    for (const Point& p : c.points) {
      const ONeillTensors o = oneill_tensors_at(c.map, p);
      const Matrix g = metric_at(c.map.source(), p).g;
      const auto& vb = o.split.vertical_basis;
      const auto& hb = o.split.horizontal_basis;
      std::vector<Vector> all = vb;
      all.insert(all.end(), hb.begin(), hb.end());
      for (const Vector& u : vb) {
        for (const Vector& v : vb) CHECK((o.T_apply(u, v) - o.T_apply(v, u)).norm() < 1e-8);
        for (const Vector& a : all)
          for (const Vector& b : all)
            CHECK(std::abs(pair(g, o.T_apply(u, a), b) + pair(g, a, o.T_apply(u, b))) < 1e-8);
      }
      for (const Vector& x : hb)
        for (const Vector& y : hb) CHECK((o.A_apply(x, y) + o.A_apply(y, x)).norm() < 1e-8);
    }
  }
}

TEST_CASE("O'Neill tensors do not depend on the frame extension") {
  std::mt19937_64 rng(8);
  const SmoothMap bent = SmoothMap::from_strings(
      "bent", testsupport::random_surface(rng, "S", "a", "b"),
      euclid("R1", {"s"}), {"a + 0.3*sin(b)"});
  const std::vector<std::pair<SmoothMap, Point>> cases{
      {phi1_36(), p36()}, {bent, Point{vec({0.2, -0.4})}}, {phi_36().map, Point{vec({0.7, 1.1, 0.4, 0.9, 0.5, -0.5})}}};
  for (const auto& [map, p] : cases) {
    const ONeillTensors a = oneill_tensors_at(map, p, FrameExtension::Projector);
    const ONeillTensors b = oneill_tensors_at(map, p, FrameExtension::GramSchmidt);
    const double scale = std::max({1.0, a.T.max_abs(), a.A.max_abs()});
    CHECK(distance(a.T, b.T) / scale < 1e-8);
    CHECK(distance(a.A, b.A) / scale < 1e-8);
  }
}

TEST_CASE("second fundamental form") {
  const SecondFundamentalForm s = second_fundamental_form_at(phi2_36(), Point{vec({0.3, 0.1})});
  for (const Matrix& m : s.coordinate) CHECK(m.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(s.tension.norm() < 1e-12);

  const double c = 1 / std::sqrt(2.0);
  const SmoothMap rot = SmoothMap::from_strings("rot", euclid("A", {"a", "b"}), euclid("B", {"c", "d"}),
                                                {"(a - b)/sqrt(2)", "(a + b)/sqrt(2)"});
  const SecondFundamentalForm sr = second_fundamental_form_at(rot, Point{vec({c, 2})});
  for (const auto& row : sr.table)
    for (const Vector& v : row) CHECK(v.norm() < 1e-12);
}

TEST_CASE("fiber geometry") {
  for (const Point& p : sample(m1_36(), 5, 4)) {
    const FiberGeometry f = fiber_geometry_at(phi1_36(), p);
    CHECK(f.umbilicity_residual < 1e-8);
    CHECK(testsupport::rel_err(f.mean_curvature, vec({0, 0, 1, 0})) < 1e-8);
    REQUIRE(f.aligned_coordinates.has_value());
    CHECK(*f.aligned_coordinates == std::vector<int>{0, 1});
    REQUIRE(f.fiber_curvature.has_value());
    CHECK(f.fiber_curvature->riemann.max_abs() < 1e-12);  // x3 frozen: a flat plane
  }
  const FiberGeometry f2 = fiber_geometry_at(phi2_36(), Point{vec({0.4, 0.1})});
  CHECK(f2.mean_curvature.norm() < 1e-10);
  CHECK(f2.umbilicity_residual < 1e-10);
  CHECK_FALSE(f2.aligned_coordinates.has_value());
  CHECK(fiber_geometry_at(projection2to1(), Point{vec({1, 2})}).mean_curvature.norm() < 1e-10);
}

TEST_CASE("product map components") {
  const ProductMap phi = phi_36();
  const std::vector<std::string> expected{"0", "0", "exp(x3)*cos(x4)", "exp(x3)*sin(x4)", "(x5 + x6)/sqrt(2)", "0"};
  const auto vars = phi.map.source().symbol_names();
  REQUIRE(phi.map.components().size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i)
    CHECK(structurally_equal(phi.map.components()[i], parse(expected[i], vars)));

  const ProductMap e47 = product_map_build("phi", phi1_47(), phi2_47("exp(2)"), "1", "1");
  const Point img = e47.map.image(Point{vec({1, 0.5, 0.3, 2})});
  CHECK(img.coords.isApprox(vec({0.5 / std::sqrt(2.0), 0, std::sin(0.3), std::cos(0.3)})));

  const SmoothMap ida = SmoothMap::from_strings("ida", euclid("A", {"a"}), euclid("C", {"c"}), {"a"});
  const SmoothMap idb = SmoothMap::from_strings("idb", euclid("B", {"b"}), euclid("D", {"d"}), {"b"});
  const ProductMap ii = product_map_build("ii", ida, idb, "1", "1");
  CHECK(differential_at(ii.map, Point{vec({0.2, 0.9})}).isApprox(Matrix::Identity(2, 2)));
}

TEST_CASE("Clairaut check") {
  const ProductMap phi = phi_36();
  std::mt19937_64 rng(6);
  for (int i = 0; i < 5; ++i) {
    const Point p = testsupport::random_point(rng, phi.map.source());
    const ClairautCheck c = clairaut_check_at(phi, p);
    CHECK(c.residual < 1e-8);
    CHECK(c.grad_ln_f.norm() == 0.0);
  }
  const SmoothMap pa = projection2to1();
  const SmoothMap pb = SmoothMap::from_strings("pb", euclid("Q", {"u", "v"}), euclid("R", {"t"}), {"u"});
  CHECK(clairaut_check_at(product_map_build("pp", pa, pb, "1", "1"), Point{vec({0.1, 0.2, 0.3, 0.4})}).residual < 1e-10);

  // umbilical first factor, totally geodesic second factor, non-constant warp
  const ProductMap warped = phi_36("x3");
  std::mt19937_64 rng2(7);
  for (int i = 0; i < 5; ++i) {
    const Point p = testsupport::random_point(rng2, warped.map.source());
    const ClairautCheck c = clairaut_check_at(warped, p);
    CHECK(c.residual < 1e-6);
    CHECK(c.grad_ln_f.norm() > 0.5);
  }
}

TEST_CASE("conformal identities") {
  const ProductMap corrected = product_map_build("phi", phi1_47(), phi2_47("exp(4)"), "1", "1");
  const ConformalIdentities c = conformal_identities_at(corrected, Point{vec({0.5, 1.5, 0.3, 0.2})});
  CHECK(c.rank_first == 1);
  CHECK(c.rank_second == 1);
  CHECK(c.dilation_squared_first == doctest::Approx(std::exp(-4.0)).epsilon(1e-12));
  CHECK(c.dilation_mismatch < 1e-12);
  CHECK(c.rank_identity_residual < 1e-8);
  CHECK(c.a_formula_residual < 1e-8);

  const ProductMap rho = product_map_build("phi", phi1_47(), phi2_47("exp(4)"), "1", "1 + y1^2/10");
  const ConformalIdentities cr = conformal_identities_at(rho, Point{vec({0.5, 1.5, 0.3, 0.2})});
  CHECK(cr.rho_at_image > 1.0);
  CHECK(cr.rank_identity_residual < 1e-8);

  const ProductMap printed = product_map_build("phi", phi1_47(), phi2_47("exp(2)"), "1", "1");
  const ConformalIdentities cp = conformal_identities_at(printed, Point{vec({0.5, 1.5, 0.3, 0.2})});
  CHECK(cp.dilation_mismatch == doctest::Approx(std::exp(-2.0) - std::exp(-4.0)).epsilon(1e-10));
}

TEST_CASE("Ricci decomposition on random warped products") {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 3; ++k) {
    const WarpedProduct w = testsupport::random_warped(rng, k);
    const SmoothMap p1 = SmoothMap::from_strings("p1", w.base(), euclid("T1", {"s"}), {"a"});
    const SmoothMap p2 = SmoothMap::from_strings("p2", w.fiber(), euclid("T2", {"t"}), {"u"});
    const ProductMap phi = product_map_build("pp", p1, p2, w.warp(), parse("1", {"s", "t"}));
    for (int i = 0; i < 3; ++i) {
      const Point p = testsupport::random_point(rng, 4, -1, 1);
      CHECK(ricci_decomposition_at(phi, p).mixed_max < 1e-6);
    }
  }
  const RicciDecomposition r = ricci_decomposition_at(phi_36(), Point{vec({0.7, 1.1, 0.4, 0.9, 0.5, -0.5})});
  CHECK(r.mixed_max < 1e-6);
  CHECK_FALSE(r.items.empty());
}

TEST_CASE("vertical velocity grouping") {
  for (const std::string f : {"1", "x3", "exp(x4)"}) {
    const ProductMap phi = phi_36(f);
    std::mt19937_64 rng(12);
    for (int i = 0; i < 4; ++i) {
      const Point p = testsupport::random_point(rng, phi.map.source());
      const DistributionSplit s = distribution_split_at(phi.map, p);
      Vector u = Vector::Zero(6);
      for (const Vector& v : s.vertical_basis) u += testsupport::uniform(rng, -1, 1) * v;
      CHECK_MESSAGE(vertical_velocity_grouping_residual(phi, p, u) < 1e-6, "f = " << f);
    }
  }
}
