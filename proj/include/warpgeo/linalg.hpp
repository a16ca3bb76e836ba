#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace warpgeo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dense rank-3 array T(k, i, j), used for Christoffel symbols and the
/// coordinate components of (1,2)-tensors such as the O'Neill tensors.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int n) : n_(n), data_(static_cast<std::size_t>(n) * n * n, 0.0) {}

  int dim() const noexcept { return n_; }
  double& operator()(int k, int i, int j) { return data_[index(k, i, j)]; }
  double operator()(int k, int i, int j) const { return data_[index(k, i, j)]; }

  /// Contraction T(k, i, j) X^i Y^j.
  Vector contract(const Vector& x, const Vector& y) const {
    Vector out = Vector::Zero(n_);
    for (int k = 0; k < n_; ++k) {
      double s = 0.0;
      for (int i = 0; i < n_; ++i) {
        for (int j = 0; j < n_; ++j) s += (*this)(k, i, j) * x[i] * y[j];
      }
      out[k] = s;
    }
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  std::size_t index(int k, int i, int j) const {
    return (static_cast<std::size_t>(k) * n_ + i) * n_ + j;
  }

  int n_ = 0;
  std::vector<double> data_;
};

/// Symmetric 2-form evaluated on a pair of vectors.
inline double pair(const Matrix& form, const Vector& x, const Vector& y) {
  return x.dot(form * y);
}

}  // namespace warpgeo
