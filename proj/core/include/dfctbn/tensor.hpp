#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

namespace dfctbn {

/// Dense third-order tensor, row-major over (i, j, k).
class Tensor3 {
 public:
  using Index = Eigen::Index;
  using Dims = std::array<Index, 3>;

  Tensor3() = default;
  explicit Tensor3(Dims dims, double fill = 0.0);

  const Dims& dims() const { return dims_; }
  Index dim(int mode) const { return dims_.at(static_cast<std::size_t>(mode)); }
  Index size() const { return static_cast<Index>(data_.size()); }

  double& operator()(Index i, Index j, Index k) { return data_[offset(i, j, k)]; }
  double operator()(Index i, Index j, Index k) const { return data_[offset(i, j, k)]; }

  Eigen::Map<Eigen::VectorXd> flat() { return {data_.data(), size()}; }
  Eigen::Map<const Eigen::VectorXd> flat() const { return {data_.data(), size()}; }

  /// Mode-n unfolding: I_n rows; columns enumerate the two remaining
  /// indices with the lower mode varying slowest.
  Eigen::MatrixXd unfold(int mode) const;
  static Tensor3 fold(const Eigen::MatrixXd& unfolded, int mode, Dims dims);

  double squared_norm() const { return flat().squaredNorm(); }
  double norm() const { return flat().norm(); }

  Tensor3& operator+=(const Tensor3& other);
  Tensor3& operator-=(const Tensor3& other);
  Tensor3& operator*=(double s);

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t offset(Index i, Index j, Index k) const {
    return static_cast<std::size_t>((i * dims_[1] + j) * dims_[2] + k);
  }

  Dims dims_{0, 0, 0};
  std::vector<double> data_;
};

Tensor3 operator+(Tensor3 a, const Tensor3& b);
Tensor3 operator-(Tensor3 a, const Tensor3& b);

/// n-mode product T x_n U, where U is J x I_n. The result has dim J in `mode`.
Tensor3 mode_product(const Tensor3& tensor, const Eigen::MatrixXd& matrix, int mode);

/// Frobenius inner product.
double inner(const Tensor3& a, const Tensor3& b);

}  // namespace dfctbn
