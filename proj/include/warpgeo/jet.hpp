#pragma once

#include <cstddef>
#include <vector>

namespace warpgeo {

/// Second-order truncated Taylor number in k active variables.
///
/// Carries a value, its gradient and its Hessian (upper triangle, row-major)
/// through arithmetic, so that derivatives up to second order are exact to
/// rounding. Symmetry of the Hessian holds by storage.
class Jet2 {
 public:
  Jet2() = default;
  explicit Jet2(std::size_t num_vars, double value = 0.0);

  static Jet2 constant(std::size_t num_vars, double value) { return Jet2(num_vars, value); }
  static Jet2 variable(std::size_t num_vars, std::size_t index, double value);

  std::size_t size() const noexcept { return grad_.size(); }
  double value() const noexcept { return value_; }
  double grad(std::size_t i) const { return grad_[i]; }
  double hess(std::size_t i, std::size_t j) const { return hess_[tri(i, j)]; }
  const std::vector<double>& gradient() const noexcept { return grad_; }

  Jet2& operator+=(const Jet2& rhs);
  Jet2& operator-=(const Jet2& rhs);
  Jet2& operator*=(double s);

  /// Applies a scalar function given its value and first two derivatives at
  /// value(): chain rule for jets.
  Jet2 compose(double f, double df, double d2f) const;

  friend Jet2 operator+(Jet2 a, const Jet2& b) { return a += b; }
  friend Jet2 operator-(Jet2 a, const Jet2& b) { return a -= b; }
  friend Jet2 operator-(const Jet2& a);
  friend Jet2 operator*(const Jet2& a, const Jet2& b);
  friend Jet2 operator*(Jet2 a, double s) { return a *= s; }
  friend Jet2 operator*(double s, Jet2 a) { return a *= s; }

 private:
  std::size_t tri(std::size_t i, std::size_t j) const;

  double value_ = 0.0;
  std::vector<double> grad_;
  std::vector<double> hess_;
};

}  // namespace warpgeo
