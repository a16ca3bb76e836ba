// Shared helpers for the test binaries: random charts and independent
// finite-difference oracles.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "warpgeo/expr.hpp"
#include "warpgeo/geometry.hpp"
#include "warpgeo/rmap.hpp"
#include "warpgeo/warped.hpp"

namespace testsupport {

using warpgeo::ChartedManifold;
using warpgeo::Matrix;
using warpgeo::Point;
using warpgeo::Tensor3;
using warpgeo::Vector;
using warpgeo::WarpedProduct;

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return std::string("(") + buf + ")";
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Point random_point(std::mt19937_64& rng, int n, double lo, double hi) {
  Point p{Vector(n)};
  for (int i = 0; i < n; ++i) p.coords[i] = uniform(rng, lo, hi);
  return p;
}

inline Point random_point(std::mt19937_64& rng, const ChartedManifold& m) {
  for (;;) {
    Point p{Vector(m.dim())};
    for (int i = 0; i < m.dim(); ++i) {
      const auto& iv = (*m.box())[static_cast<std::size_t>(i)];
      p.coords[i] = uniform(rng, iv.lo, iv.hi);
    }
    if (m.admissible(p)) return p;
  }
}

// Non-diagonal, point-dependent 2x2 metric, diagonally dominant on [-1, 1]^2.
inline ChartedManifold random_surface(std::mt19937_64& rng, const std::string& name,
                                      const std::string& a, const std::string& b) {
  const auto c = [&] { return num(uniform(rng, -0.5, 0.5)); };
  const std::string g11 = "2 + " + c() + "*sin(" + a + ")";
  const std::string g12 = c() + "*cos(" + b + ")";
  const std::string g22 = "2 + " + c() + "*cos(" + a + "*" + b + ") + " + c() + "*" + b + "^2/4";
  ChartedManifold m = ChartedManifold::from_strings(name, {a, b}, {{g11, g12}, {g12, g22}});
  m.set_box({{-1, 1}, {-1, 1}});
  return m;
}

inline WarpedProduct random_warped(std::mt19937_64& rng, int index) {
  const std::string tag = std::to_string(index);
  ChartedManifold base = random_surface(rng, "B" + tag, "a", "b");
  ChartedManifold fiber = random_surface(rng, "F" + tag, "u", "v");
  const std::string f = "exp(" + num(uniform(rng, -0.5, 0.5)) + "*a)*(1.2 + " +
                        num(uniform(rng, -0.5, 0.5)) + "*sin(b))";
  return WarpedProduct::from_strings("W" + tag, base, fiber, f);
}

// Central-difference oracles built only on metric_at.

inline Matrix fd_metric_partial(const ChartedManifold& m, const Point& p, int k, double h) {
  Point a = p, b = p;
  a.coords[k] += h;
  b.coords[k] -= h;
  return (warpgeo::metric_at(m, a).g - warpgeo::metric_at(m, b).g) / (2.0 * h);
}

inline Tensor3 fd_christoffel(const ChartedManifold& m, const Point& p, double h = 1e-5) {
  const int n = m.dim();
  std::vector<Matrix> dg;
  for (int k = 0; k < n; ++k) dg.push_back(fd_metric_partial(m, p, k, h));
  const Matrix inv = warpgeo::metric_at(m, p).g.inverse();
  Tensor3 out(n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int l = 0; l < n; ++l) s += 0.5 * inv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
        out(k, i, j) = s;
      }
  return out;
}

// R(X, Y)Z from differenced Christoffel symbols.
inline Vector fd_riemann_apply(const ChartedManifold& m, const Point& p, const Vector& x,
                               const Vector& y, const Vector& z, double h = 1e-3) {
  const int n = m.dim();
  const Tensor3 gamma = fd_christoffel(m, p);
  std::vector<Tensor3> dgamma;
  for (int mu = 0; mu < n; ++mu) {
    Point a = p, b = p;
    a.coords[mu] += h;
    b.coords[mu] -= h;
    const Tensor3 ga = fd_christoffel(m, a), gb = fd_christoffel(m, b);
    Tensor3 d(n);
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) d(k, i, j) = (ga(k, i, j) - gb(k, i, j)) / (2.0 * h);
    dgamma.push_back(d);
  }
  Vector out = Vector::Zero(n);
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double r = dgamma[i](l, j, k) - dgamma[j](l, i, k);
          for (int q = 0; q < n; ++q) r += gamma(l, i, q) * gamma(q, j, k) - gamma(l, j, q) * gamma(q, i, k);
          out[l] += r * z[k] * x[i] * y[j];
        }
  return out;
}

// Max-norm error relative to the larger operand, never below `floor`
// (pass the size of the tensor being sampled when both sides may vanish).
inline double rel_err(const Vector& a, const Vector& b, double floor = 1e-12) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), floor});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

// Random smooth expressions in x, y. Every branch keeps arguments of ln,
// sqrt and non-constant powers strictly positive and values bounded.
struct ExprGen {
  std::mt19937_64 rng;
  std::string leaf() {
    std::uniform_int_distribution<int> pick(0, 3);
    switch (pick(rng)) {
      case 0: return "x";
      case 1: return "y";
      case 2: return "(x*y)";
      default: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", std::uniform_real_distribution<double>(-2, 2)(rng));
        return std::string("(") + buf + ")";
      }
    }
  }
  std::string bounded(int depth) { return "sin(" + make(depth) + ")"; }
  std::string make(int depth) {
    if (depth <= 0) return leaf();
    std::uniform_int_distribution<int> pick(0, 11);
    const int d = depth - 1;
    switch (pick(rng)) {
      case 0: return "(" + make(d) + " + " + make(d) + ")";
      case 1: return "(" + make(d) + " - " + make(d) + ")";
      case 2: return "(" + bounded(d) + " * " + make(d) + ")";
      case 3: return "(" + make(d) + " / (2 + cos(" + make(d) + ")))";
      case 4: return "exp(" + bounded(d) + ")";
      case 5: return "ln(2 + " + bounded(d) + ")";
      case 6: return "sqrt(3 + " + bounded(d) + ")";
      case 7: return "(" + bounded(d) + ")^2";
      case 8: return "(2 + " + bounded(d) + ")^(" + bounded(d) + ")";
      case 9: return "tan(0.5*" + bounded(d) + ")";
      case 10: return "-" + make(d);
      default: return "cos(" + make(d) + ")";
    }
  }
};

// Number of (expression, point) pairs whose jet derivatives disagree with
// central differences: gradient within 1e-5, Hessian within 1e-4, both
// relative to max(1, |finite difference|).
inline int jet_fd_failures(int expressions, int points, std::uint64_t seed = 2024) {
  const std::vector<std::string> vars{"x", "y"};
  ExprGen gen{std::mt19937_64(seed)};
  std::mt19937_64 prng(seed + 1);
  int failures = 0;
  for (int t = 0; t < expressions; ++t) {
    const warpgeo::Expr e = warpgeo::parse(gen.make(1 + t % 6), vars);
    for (int k = 0; k < points; ++k) {
      const double x = uniform(prng, -1, 1), y = uniform(prng, -1, 1);
      const auto f = [&](double a, double b) { return warpgeo::evaluate(e, {{"x", a}, {"y", b}}); };
      const warpgeo::Jet2 j = warpgeo::eval_jet2(e, {{"x", x}, {"y", y}}, vars);
      const double h1 = 1e-5, h2 = 1e-3;
      const double g[2] = {(f(x + h1, y) - f(x - h1, y)) / (2 * h1), (f(x, y + h1) - f(x, y - h1)) / (2 * h1)};
      const double hxx = (f(x + h2, y) - 2 * f(x, y) + f(x - h2, y)) / (h2 * h2);
      const double hyy = (f(x, y + h2) - 2 * f(x, y) + f(x, y - h2)) / (h2 * h2);
      const double hxy =
          (f(x + h2, y + h2) - f(x + h2, y - h2) - f(x - h2, y + h2) + f(x - h2, y - h2)) / (4 * h2 * h2);
      const double gs = std::max({1.0, std::abs(g[0]), std::abs(g[1])});
      const double hs = std::max({1.0, std::abs(hxx), std::abs(hyy), std::abs(hxy)});
      const bool ok = j.value() == f(x, y) && std::abs(j.grad(0) - g[0]) < 1e-5 * gs &&
                      std::abs(j.grad(1) - g[1]) < 1e-5 * gs && std::abs(j.hess(0, 0) - hxx) < 1e-4 * hs &&
                      std::abs(j.hess(1, 1) - hyy) < 1e-4 * hs && std::abs(j.hess(0, 1) - hxy) < 1e-4 * hs;
      failures += ok ? 0 : 1;
    }
  }
  return failures;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace testsupport
