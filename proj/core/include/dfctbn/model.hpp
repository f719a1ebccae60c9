#pragma once

// Core representation of the functional CTBN: binary condition profiles,
// risk-factor vectors, the edge-grouped coefficient vector and its expanded
// (row x child x coefficient) tensor.
//
// Indexing conventions used throughout the library:
//   * Coefficient groups of child i: 0 = baseline, 1 = own state,
//     2 + k = edge from the k-th other condition (others in ascending order).
//   * Parent configuration u of child i: bit pattern over the other D-1
//     conditions in ascending order, the first one being the most significant.
//   * Tensor row r = own_state * 2^(D-1) + u  (own-state major).

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "dfctbn/tensor.hpp"

namespace dfctbn {

using Index = Eigen::Index;

/// Exponents above this are rejected instead of producing inf.
inline constexpr double kMaxExponent = 700.0;

struct ModelShape {
  int conditions = 5;
  int covariates = 7;

  int coefficients() const { return covariates + 1; }
  int groups() const { return conditions + 1; }
  int parent_configs() const { return 1 << (conditions - 1); }
  int rows() const { return 1 << conditions; }
  Index child_size() const { return static_cast<Index>(groups()) * coefficients(); }
  Index compact_size() const { return conditions * child_size(); }
  Index index(int child, int group, int coef) const {
    return (static_cast<Index>(child) * groups() + group) * coefficients() + coef;
  }

  /// Throws DimensionError unless 2 <= conditions <= 16 and covariates >= 0.
  void validate() const;

  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

/// Group index holding the edge parent -> child.
int edge_group(int child, int parent);
/// Parent condition behind an edge group (group >= 2).
int group_parent(int child, int group);

int make_row(const ModelShape& shape, int own_state, int parent_config);
int row_own_state(const ModelShape& shape, int row);
int row_parent_config(const ModelShape& shape, int row);
/// Indicator a_r(g) of the additive design: 1 for the baseline, the own
/// state for group 1 and the parent's state for edge groups.
double row_indicator(const ModelShape& shape, int row, int group);

class ConditionProfile {
 public:
  ConditionProfile() = default;
  explicit ConditionProfile(std::vector<std::uint8_t> states);
  static ConditionProfile zeros(int conditions);

  int size() const { return static_cast<int>(states_.size()); }
  std::uint8_t operator[](int i) const { return states_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::uint8_t>& states() const { return states_; }
  ConditionProfile flipped(int condition) const;
  int active_count() const;

  /// Parent configuration of `child` (see the file comment for bit order).
  int parent_config(int child) const;
  /// Tensor row of `child` in this profile.
  int row(int child) const;

  friend bool operator==(const ConditionProfile&, const ConditionProfile&) = default;
  friend auto operator<=>(const ConditionProfile&, const ConditionProfile&) = default;

 private:
  std::vector<std::uint8_t> states_;
};

/// Risk-factor vector with the leading intercept entry fixed to 1.
class RiskFactors {
 public:
  RiskFactors() = default;
  /// `values` includes the intercept; throws unless values[0] == 1 and all finite.
  explicit RiskFactors(Eigen::VectorXd values);
  static RiskFactors from_covariates(const Eigen::VectorXd& covariates);

  const Eigen::VectorXd& values() const { return values_; }
  int covariates() const { return static_cast<int>(values_.size()) - 1; }
  Index size() const { return values_.size(); }
  double operator[](Index i) const { return values_(i); }

  friend bool operator==(const RiskFactors& a, const RiskFactors& b) { return a.values_ == b.values_; }
  /// Lexicographic; used to order risk strata deterministically.
  friend bool operator<(const RiskFactors& a, const RiskFactors& b);

 private:
  Eigen::VectorXd values_;
};

/// Edge-grouped log-rate coefficients: per child a baseline group, an
/// own-state group and one group per candidate parent, each of length m+1.
class CompactParams {
 public:
  CompactParams() = default;
  explicit CompactParams(const ModelShape& shape);
  CompactParams(const ModelShape& shape, Eigen::VectorXd values);

  const ModelShape& shape() const { return shape_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }

  auto group(int child, int g) { return values_.segment(shape_.index(child, g, 0), shape_.coefficients()); }
  auto group(int child, int g) const { return values_.segment(shape_.index(child, g, 0), shape_.coefficients()); }
  auto child_block(int child) { return values_.segment(shape_.index(child, 0, 0), shape_.child_size()); }
  auto child_block(int child) const { return values_.segment(shape_.index(child, 0, 0), shape_.child_size()); }

  /// Coefficient slice of (child, row): sum of the active groups.
  Eigen::VectorXd cell_coefficients(int child, int row) const;
  /// z . beta for (child, row); not guarded.
  double log_intensity(const RiskFactors& z, int child, int row) const;

  friend bool operator==(const CompactParams& a, const CompactParams& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  ModelShape shape_;
  Eigen::VectorXd values_;
};

/// Expanded coefficients: mode 0 = row (own state, parent config), mode 1 =
/// child, mode 2 = coefficient.
class CoefficientTensor {
 public:
  CoefficientTensor() = default;
  CoefficientTensor(const ModelShape& shape, Tensor3 values);

  const ModelShape& shape() const { return shape_; }
  const Tensor3& values() const { return values_; }
  Tensor3& values() { return values_; }

  Eigen::VectorXd slice(int row, int child) const;
  double log_intensity(const RiskFactors& z, int child, int row) const;

 private:
  ModelShape shape_;
  Tensor3 values_;
};

CoefficientTensor expand(const CompactParams& params);
/// Inverse of expand for tensors that are affine in the row indicators.
CompactParams compact(const CoefficientTensor& tensor);

/// Design row of (child, row, z) over the child's block: kron(a_r, z).
Eigen::VectorXd cell_design(const ModelShape& shape, int row, const RiskFactors& z);

/// exp(exponent) with the overflow guard; throws OverflowError.
double guarded_exp(double exponent);

}  // namespace dfctbn
