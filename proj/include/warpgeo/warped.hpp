#pragma once

#include <string>

#include "warpgeo/geometry.hpp"

namespace warpgeo {

/// M1 x_f M2: base chart, fiber chart and a positive warping function f on
/// the base. The product chart orders base coordinates first.
class WarpedProduct {
 public:
  WarpedProduct() = default;
  WarpedProduct(std::string name, ChartedManifold base, ChartedManifold fiber, Expr warp);
  static WarpedProduct from_strings(std::string name, ChartedManifold base, ChartedManifold fiber,
                                    std::string_view warp);

  const std::string& name() const noexcept { return name_; }
  const ChartedManifold& base() const noexcept { return base_; }
  const ChartedManifold& fiber() const noexcept { return fiber_; }
  const Expr& warp() const noexcept { return warp_; }
  int base_dim() const noexcept { return base_.dim(); }
  int fiber_dim() const noexcept { return fiber_.dim(); }

  /// The product-chart manifold with metric g1 + f^2 g2.
  const ChartedManifold& charted() const noexcept { return charted_; }

  Point base_point(const Point& p) const;
  Point fiber_point(const Point& p) const;
  Point join(const Point& base, const Point& fiber) const;
  double warp_at(const Point& p) const;

 private:
  std::string name_;
  ChartedManifold base_;
  ChartedManifold fiber_;
  Expr warp_;
  ChartedManifold charted_;
};

ChartedManifold as_charted(const WarpedProduct& w);

/// Tangent vector on the product chart split into base and fiber parts.
struct SplitVector {
  Vector base_part;
  Vector fiber_part;
  Point at;

  Vector combined() const;
};

SplitVector split_at(const WarpedProduct& w, const TangentVector& v);

enum class LiftFactor { Base, Fiber };

/// Lift of a constant-coefficient field on one factor chart.
struct LiftField {
  LiftFactor factor = LiftFactor::Base;
  Vector coefficients;

  static LiftField base(Vector c) { return {LiftFactor::Base, std::move(c)}; }
  static LiftField fiber(Vector c) { return {LiftFactor::Fiber, std::move(c)}; }
};

/// nabla_X Y from the warped-product connection formulas.
SplitVector connection_closed_form_at(const WarpedProduct& w, const LiftField& x,
                                      const LiftField& y, const Point& p);

/// The five curvature cases, named by the factors of (X, Y, Z) in R(X, Y)Z.
enum class CurvatureCase {
  BaseBaseBase = 1,    // R(X1, Y1)Z1 = lift of R1(X1, Y1)Z1
  BaseFiberBase = 2,   // R(X1, Y2)Z1 = (H^f(X1, Z1) / f) Y2
  MixedZero = 3,       // R(X1, Y1)Y2 = R(Y2, Z2)X1 = 0
  BaseFiberFiber = 4,  // R(X1, Y2)Z2 = -(g(Y2, Z2) / f) nabla_X1 grad f
  FiberFiberFiber = 5  // R(X2, Y2)Z2 = R2 + (|grad f|^2 / f^2)(g(X2, Z2)Y2 - g(Y2, Z2)X2)
};

SplitVector curvature_closed_form_at(const WarpedProduct& w, CurvatureCase c, const LiftField& x,
                                     const LiftField& y, const LiftField& z, const Point& p);

}  // namespace warpgeo
