#include "warpgeo/warped.hpp"

#include <algorithm>
#include <cmath>

namespace warpgeo {

namespace {

Bindings merged_parameters(const std::string& name, const ChartedManifold& base,
                           const ChartedManifold& fiber) {
  Bindings out = base.parameters();
  for (const auto& [pname, value] : fiber.parameters()) {
    if (const double* existing = out.find(pname)) {
      if (*existing != value) {
        throw Error(ErrorCode::NameCollision,
                    "warped product '" + name + "': parameter '" + pname +
                        "' has different values on base and fiber");
      }
    } else {
      out.set(pname, value);
    }
  }
  return out;
}

void check_disjoint(const std::string& name, const ChartedManifold& base,
                    const ChartedManifold& fiber) {
  for (const auto& a : base.coordinates()) {
    for (const auto& b : fiber.coordinates()) {
      if (a == b) {
        throw Error(ErrorCode::NameCollision,
                    "warped product '" + name + "': coordinate '" + a +
                        "' appears in both base and fiber");
      }
    }
    if (fiber.parameters().find(a)) {
      throw Error(ErrorCode::NameCollision,
                  "warped product '" + name + "': base coordinate '" + a + "' is a fiber parameter");
    }
  }
  for (const auto& b : fiber.coordinates()) {
    if (base.parameters().find(b)) {
      throw Error(ErrorCode::NameCollision,
                  "warped product '" + name + "': fiber coordinate '" + b + "' is a base parameter");
    }
  }
}

void check_lift(const WarpedProduct& w, const LiftField& v) {
  const int want = v.factor == LiftFactor::Base ? w.base_dim() : w.fiber_dim();
  if (v.coefficients.size() != want) {
    throw Error(ErrorCode::NotPureLift, "lift coefficients have length " +
                                            std::to_string(v.coefficients.size()) + ", expected " +
                                            std::to_string(want));
  }
}

Vector warp_differential(const WarpedProduct& w, const Point& base) {
  const Jet2 jet = eval_jet2(w.warp(), w.base().bindings(base), w.base().coordinates());
  Vector df(w.base_dim());
  for (int i = 0; i < w.base_dim(); ++i) df[i] = jet.grad(i);
  return df;
}

SplitVector zero_split(const WarpedProduct& w, const Point& p) {
  return {Vector::Zero(w.base_dim()), Vector::Zero(w.fiber_dim()), p};
}

}  // namespace

WarpedProduct::WarpedProduct(std::string name, ChartedManifold base, ChartedManifold fiber,
                             Expr warp)
    : name_(std::move(name)), base_(std::move(base)), fiber_(std::move(fiber)), warp_(std::move(warp)) {
  check_disjoint(name_, base_, fiber_);
  const std::vector<std::string> base_symbols = base_.symbol_names();
  for (const auto& v : free_variables(warp_)) {
    if (std::find(base_symbols.begin(), base_symbols.end(), v) == base_symbols.end()) {
      throw Error(ErrorCode::UnknownVariable, "warp of '" + name_ + "' references '" + v +
                                                  "', which is not a base coordinate or parameter");
    }
  }
  charted_ = as_charted(*this);
}

WarpedProduct WarpedProduct::from_strings(std::string name, ChartedManifold base,
                                          ChartedManifold fiber, std::string_view warp) {
  const Expr f = parse(warp, base.symbol_names());
  return WarpedProduct(std::move(name), std::move(base), std::move(fiber), f);
}

Point WarpedProduct::base_point(const Point& p) const {
  if (p.coords.size() != base_dim() + fiber_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "point does not lie on the product chart of '" + name_ + "'");
  }
  return {p.coords.head(base_dim())};
}

Point WarpedProduct::fiber_point(const Point& p) const {
  if (p.coords.size() != base_dim() + fiber_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "point does not lie on the product chart of '" + name_ + "'");
  }
  return {p.coords.tail(fiber_dim())};
}

Point WarpedProduct::join(const Point& base, const Point& fiber) const {
  Vector c(base_dim() + fiber_dim());
  c << base.coords, fiber.coords;
  return {c};
}

double WarpedProduct::warp_at(const Point& p) const {
  return evaluate(warp_, base_.bindings(base_point(p)));
}

ChartedManifold as_charted(const WarpedProduct& w) {
  const ChartedManifold& b = w.base();
  const ChartedManifold& fb = w.fiber();
  const int m1 = b.dim();
  const int m2 = fb.dim();
  const int n = m1 + m2;
  std::vector<std::string> coords = b.coordinates();
  coords.insert(coords.end(), fb.coordinates().begin(), fb.coordinates().end());
  const Expr f2 = Expr::binary(BinaryOp::Pow, w.warp(), Expr::constant(2.0));
  std::vector<Expr> upper;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      if (j < m1) {
        upper.push_back(b.metric_entry(i, j));
      } else if (i >= m1) {
        upper.push_back(f2 * fb.metric_entry(i - m1, j - m1));
      } else {
        upper.push_back(Expr::constant(0.0));
      }
    }
  }
  std::vector<Expr> constraints = b.constraints();
  constraints.insert(constraints.end(), fb.constraints().begin(), fb.constraints().end());
  constraints.push_back(w.warp());
  ChartedManifold out(w.name(), std::move(coords), std::move(upper), std::move(constraints),
                      merged_parameters(w.name(), b, fb));
  if (b.box() && fb.box()) {
    std::vector<Interval> box = *b.box();
    box.insert(box.end(), fb.box()->begin(), fb.box()->end());
    out.set_box(std::move(box));
  }
  return out;
}

Vector SplitVector::combined() const {
  Vector c(base_part.size() + fiber_part.size());
  c << base_part, fiber_part;
  return c;
}

SplitVector split_at(const WarpedProduct& w, const TangentVector& v) {
  const int n = w.base_dim() + w.fiber_dim();
  if (v.components.size() != n || v.base.coords.size() != n) {
    throw Error(ErrorCode::DimensionMismatch,
                "tangent vector does not match the product chart of '" + w.name() + "'");
  }
  return {v.components.head(w.base_dim()), v.components.tail(w.fiber_dim()), v.base};
}

SplitVector connection_closed_form_at(const WarpedProduct& w, const LiftField& x,
                                      const LiftField& y, const Point& p) {
  check_lift(w, x);
  check_lift(w, y);
  w.charted().check_admissible(p);
  const Point pb = w.base_point(p);
  const Point pf = w.fiber_point(p);
  SplitVector out = zero_split(w, p);

  if (x.factor == LiftFactor::Base && y.factor == LiftFactor::Base) {
    out.base_part = christoffel_at(w.base(), pb).contract(x.coefficients, y.coefficients);
    return out;
  }
  const double f = w.warp_at(p);
  if (x.factor != y.factor) {
    const LiftField& b = x.factor == LiftFactor::Base ? x : y;
    const LiftField& v = x.factor == LiftFactor::Base ? y : x;
    out.fiber_part = (warp_differential(w, pb).dot(b.coefficients) / f) * v.coefficients;
    return out;
  }
  // Both fiber lifts: normal part -g_M(X2, Y2) grad ln f, tangent part from the fiber.
  const MetricAt g1 = metric_at(w.base(), pb);
  const Matrix g2 = metric_at(w.fiber(), pf).g;
  const double gm = f * f * pair(g2, x.coefficients, y.coefficients);
  const Vector grad_ln_f = g1.inverse * warp_differential(w, pb) / f;
  out.base_part = -gm * grad_ln_f;
  out.fiber_part = christoffel_at(w.fiber(), pf).contract(x.coefficients, y.coefficients);
  return out;
}

SplitVector curvature_closed_form_at(const WarpedProduct& w, CurvatureCase c, const LiftField& x,
                                     const LiftField& y, const LiftField& z, const Point& p) {
  check_lift(w, x);
  check_lift(w, y);
  check_lift(w, z);
  w.charted().check_admissible(p);
  const auto pattern = [&](LiftFactor a, LiftFactor b, LiftFactor d) {
    return x.factor == a && y.factor == b && z.factor == d;
  };
  constexpr LiftFactor B = LiftFactor::Base;
  constexpr LiftFactor F = LiftFactor::Fiber;
  bool matches = false;
  switch (c) {
    case CurvatureCase::BaseBaseBase: matches = pattern(B, B, B); break;
    case CurvatureCase::BaseFiberBase: matches = pattern(B, F, B); break;
    case CurvatureCase::MixedZero: matches = pattern(B, B, F) || pattern(F, F, B); break;
    case CurvatureCase::BaseFiberFiber: matches = pattern(B, F, F); break;
    case CurvatureCase::FiberFiberFiber: matches = pattern(F, F, F); break;
  }
  if (!matches) {
    throw Error(ErrorCode::CaseMismatch, "lift factors do not match curvature case " +
                                             std::to_string(static_cast<int>(c)));
  }

  const Point pb = w.base_point(p);
  const Point pf = w.fiber_point(p);
  SplitVector out = zero_split(w, p);
  switch (c) {
    case CurvatureCase::BaseBaseBase:
      out.base_part =
          curvature_at(w.base(), pb).riemann.apply(x.coefficients, y.coefficients, z.coefficients);
      break;
    case CurvatureCase::BaseFiberBase: {
      const double f = w.warp_at(p);
      const Matrix hf = covariant_hessian_at(w.base(), w.warp(), pb);
      out.fiber_part = (pair(hf, x.coefficients, z.coefficients) / f) * y.coefficients;
      break;
    }
    case CurvatureCase::MixedZero:
      break;
    case CurvatureCase::BaseFiberFiber: {
      const double f = w.warp_at(p);
      const Matrix g2 = metric_at(w.fiber(), pf).g;
      const double gm = f * f * pair(g2, y.coefficients, z.coefficients);
      out.base_part = -(gm / f) * hessian_operator_apply(w.base(), w.warp(), pb, x.coefficients);
      break;
    }
    case CurvatureCase::FiberFiberFiber: {
      const double f = w.warp_at(p);
      const MetricAt g1 = metric_at(w.base(), pb);
      const Matrix g2 = metric_at(w.fiber(), pf).g;
      const Vector df = warp_differential(w, pb);
      const double grad_sq = pair(g1.inverse, df, df);
      const double gxz = f * f * pair(g2, x.coefficients, z.coefficients);
      const double gyz = f * f * pair(g2, y.coefficients, z.coefficients);
      out.fiber_part =
          curvature_at(w.fiber(), pf).riemann.apply(x.coefficients, y.coefficients, z.coefficients) +
          (grad_sq / (f * f)) * (gxz * y.coefficients - gyz * x.coefficients);
      break;
    }
  }
  return out;
}

}  // namespace warpgeo
