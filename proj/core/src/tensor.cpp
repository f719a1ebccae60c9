#include "dfctbn/tensor.hpp"

#include <string>

#include "dfctbn/error.hpp"

namespace dfctbn {

namespace {

void check_mode(int mode) {
  if (mode < 0 || mode > 2) throw DimensionError("tensor mode must be 0, 1 or 2, got " + std::to_string(mode));
}

void check_same_dims(const Tensor3& a, const Tensor3& b) {
  if (a.dims() != b.dims()) throw DimensionError("tensor dimensions differ");
}

// The two modes other than `mode`, lower first.
std::array<int, 2> other_modes(int mode) {
  switch (mode) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

}  // namespace

Tensor3::Tensor3(Dims dims, double fill) : dims_(dims) {
  for (Index d : dims_) {
    if (d < 0) throw DimensionError("negative tensor dimension");
  }
  data_.assign(static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]), fill);
}

Eigen::MatrixXd Tensor3::unfold(int mode) const {
  check_mode(mode);
  const auto [a, b] = other_modes(mode);
  Eigen::MatrixXd out(dims_[mode], dims_[a] * dims_[b]);
  std::array<Index, 3> idx{};
  for (idx[0] = 0; idx[0] < dims_[0]; ++idx[0]) {
    for (idx[1] = 0; idx[1] < dims_[1]; ++idx[1]) {
      for (idx[2] = 0; idx[2] < dims_[2]; ++idx[2]) {
        out(idx[mode], idx[a] * dims_[b] + idx[b]) = (*this)(idx[0], idx[1], idx[2]);
      }
    }
  }
  return out;
}

Tensor3 Tensor3::fold(const Eigen::MatrixXd& unfolded, int mode, Dims dims) {
  check_mode(mode);
  const auto [a, b] = other_modes(mode);
  if (unfolded.rows() != dims[mode] || unfolded.cols() != dims[a] * dims[b]) {
    throw DimensionError("unfolded matrix does not match target dimensions");
  }
  Tensor3 out(dims);
  std::array<Index, 3> idx{};
  for (idx[0] = 0; idx[0] < dims[0]; ++idx[0]) {
    for (idx[1] = 0; idx[1] < dims[1]; ++idx[1]) {
      for (idx[2] = 0; idx[2] < dims[2]; ++idx[2]) {
        out(idx[0], idx[1], idx[2]) = unfolded(idx[mode], idx[a] * dims[b] + idx[b]);
      }
    }
  }
  return out;
}

Tensor3& Tensor3::operator+=(const Tensor3& other) {
  check_same_dims(*this, other);
  flat() += other.flat();
  return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& other) {
  check_same_dims(*this, other);
  flat() -= other.flat();
  return *this;
}

Tensor3& Tensor3::operator*=(double s) {
  flat() *= s;
  return *this;
}

Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }

Tensor3 mode_product(const Tensor3& tensor, const Eigen::MatrixXd& matrix, int mode) {
  check_mode(mode);
  if (matrix.cols() != tensor.dim(mode)) {
    throw DimensionError("mode product: matrix has " + std::to_string(matrix.cols()) + " columns, tensor mode " +
                         std::to_string(mode) + " has size " + std::to_string(tensor.dim(mode)));
  }
  Tensor3::Dims dims = tensor.dims();
  dims[static_cast<std::size_t>(mode)] = matrix.rows();
  return Tensor3::fold(matrix * tensor.unfold(mode), mode, dims);
}

double inner(const Tensor3& a, const Tensor3& b) {
  check_same_dims(a, b);
  return a.flat().dot(b.flat());
}

}  // namespace dfctbn
