#include "warpgeo/jet.hpp"

#include <utility>

namespace warpgeo {

Jet2::Jet2(std::size_t num_vars, double value)
    : value_(value), grad_(num_vars, 0.0), hess_(num_vars * (num_vars + 1) / 2, 0.0) {}

Jet2 Jet2::variable(std::size_t num_vars, std::size_t index, double value) {
  Jet2 j(num_vars, value);
  j.grad_[index] = 1.0;
  return j;
}

std::size_t Jet2::tri(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  const std::size_t n = grad_.size();
  return i * n - i * (i + 1) / 2 + j;
}

Jet2& Jet2::operator+=(const Jet2& rhs) {
  value_ += rhs.value_;
  for (std::size_t i = 0; i < grad_.size(); ++i) grad_[i] += rhs.grad_[i];
  for (std::size_t i = 0; i < hess_.size(); ++i) hess_[i] += rhs.hess_[i];
  return *this;
}

Jet2& Jet2::operator-=(const Jet2& rhs) {
  value_ -= rhs.value_;
  for (std::size_t i = 0; i < grad_.size(); ++i) grad_[i] -= rhs.grad_[i];
  for (std::size_t i = 0; i < hess_.size(); ++i) hess_[i] -= rhs.hess_[i];
  return *this;
}

Jet2& Jet2::operator*=(double s) {
  value_ *= s;
  for (double& g : grad_) g *= s;
  for (double& h : hess_) h *= s;
  return *this;
}

Jet2 operator-(const Jet2& a) {
  Jet2 r = a;
  r *= -1.0;
  return r;
}

Jet2 operator*(const Jet2& a, const Jet2& b) {
  const std::size_t n = a.grad_.size();
  Jet2 r(n, a.value_ * b.value_);
  for (std::size_t i = 0; i < n; ++i) r.grad_[i] = a.value_ * b.grad_[i] + b.value_ * a.grad_[i];
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j, ++k) {
      r.hess_[k] = a.value_ * b.hess_[k] + b.value_ * a.hess_[k] + a.grad_[i] * b.grad_[j] +
                   a.grad_[j] * b.grad_[i];
    }
  }
  return r;
}

Jet2 Jet2::compose(double f, double df, double d2f) const {
  const std::size_t n = grad_.size();
  Jet2 r(n, f);
  for (std::size_t i = 0; i < n; ++i) r.grad_[i] = df * grad_[i];
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j, ++k) {
      r.hess_[k] = df * hess_[k] + d2f * grad_[i] * grad_[j];
    }
  }
  return r;
}

}  // namespace warpgeo
