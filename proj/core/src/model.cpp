#include "dfctbn/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dfctbn/error.hpp"

namespace dfctbn {

void ModelShape::validate() const {
  if (conditions < 2 || conditions > 16) {
    throw DimensionError("condition count must be in [2, 16], got " + std::to_string(conditions));
  }
  if (covariates < 0) throw DimensionError("covariate count must be non-negative");
}

int edge_group(int child, int parent) {
  if (parent == child) throw DimensionError("no self edge group");
  return 2 + (parent < child ? parent : parent - 1);
}

int group_parent(int child, int group) {
  if (group < 2) throw DimensionError("group " + std::to_string(group) + " is not an edge group");
  const int k = group - 2;
  return k < child ? k : k + 1;
}

int make_row(const ModelShape& shape, int own_state, int parent_config) {
  return own_state * shape.parent_configs() + parent_config;
}

int row_own_state(const ModelShape& shape, int row) { return row / shape.parent_configs(); }

int row_parent_config(const ModelShape& shape, int row) { return row % shape.parent_configs(); }

double row_indicator(const ModelShape& shape, int row, int group) {
  if (group == 0) return 1.0;
  if (group == 1) return row_own_state(shape, row);
  const int bit = shape.conditions - 2 - (group - 2);
  return (row_parent_config(shape, row) >> bit) & 1;
}

// ---------------------------------------------------------------------------

ConditionProfile::ConditionProfile(std::vector<std::uint8_t> states) : states_(std::move(states)) {
  for (auto s : states_) {
    if (s > 1) throw DataError("condition states must be 0 or 1");
  }
}

ConditionProfile ConditionProfile::zeros(int conditions) {
  return ConditionProfile(std::vector<std::uint8_t>(static_cast<std::size_t>(conditions), 0));
}

ConditionProfile ConditionProfile::flipped(int condition) const {
  ConditionProfile out = *this;
  auto& s = out.states_.at(static_cast<std::size_t>(condition));
  s = static_cast<std::uint8_t>(1 - s);
  return out;
}

int ConditionProfile::active_count() const {
  return static_cast<int>(std::count(states_.begin(), states_.end(), std::uint8_t{1}));
}

int ConditionProfile::parent_config(int child) const {
  int u = 0;
  for (int j = 0; j < size(); ++j) {
    if (j == child) continue;
    u = (u << 1) | states_[static_cast<std::size_t>(j)];
  }
  return u;
}

int ConditionProfile::row(int child) const {
  return ((*this)[child] << (size() - 1)) | parent_config(child);
}

// ---------------------------------------------------------------------------

RiskFactors::RiskFactors(Eigen::VectorXd values) : values_(std::move(values)) {
  if (values_.size() < 1 || values_(0) != 1.0) {
    throw DataError("risk-factor vector must start with the intercept entry 1");
  }
  if (!values_.allFinite()) throw DataError("risk-factor vector has non-finite entries");
}

RiskFactors RiskFactors::from_covariates(const Eigen::VectorXd& covariates) {
  Eigen::VectorXd v(covariates.size() + 1);
  v << 1.0, covariates;
  return RiskFactors(std::move(v));
}

bool operator<(const RiskFactors& a, const RiskFactors& b) {
  return std::lexicographical_compare(a.values_.begin(), a.values_.end(), b.values_.begin(), b.values_.end());
}

// ---------------------------------------------------------------------------

CompactParams::CompactParams(const ModelShape& shape) : CompactParams(shape, Eigen::VectorXd::Zero(shape.compact_size())) {}

CompactParams::CompactParams(const ModelShape& shape, Eigen::VectorXd values) : shape_(shape), values_(std::move(values)) {
  shape_.validate();
  if (values_.size() != shape_.compact_size()) {
    throw DimensionError("compact parameter vector has " + std::to_string(values_.size()) + " entries, expected " +
                         std::to_string(shape_.compact_size()));
  }
}

Eigen::VectorXd CompactParams::cell_coefficients(int child, int row) const {
  Eigen::VectorXd beta = group(child, 0);
  for (int g = 1; g < shape_.groups(); ++g) {
    if (row_indicator(shape_, row, g) != 0.0) beta += group(child, g);
  }
  return beta;
}

double CompactParams::log_intensity(const RiskFactors& z, int child, int row) const {
  if (z.size() != shape_.coefficients()) throw DimensionError("risk-factor length does not match the model");
  return z.values().dot(cell_coefficients(child, row));
}

// ---------------------------------------------------------------------------

CoefficientTensor::CoefficientTensor(const ModelShape& shape, Tensor3 values) : shape_(shape), values_(std::move(values)) {
  shape_.validate();
  const Tensor3::Dims expected{shape_.rows(), shape_.conditions, shape_.coefficients()};
  if (values_.dims() != expected) throw DimensionError("coefficient tensor dimensions do not match the model shape");
}

Eigen::VectorXd CoefficientTensor::slice(int row, int child) const {
  Eigen::VectorXd out(shape_.coefficients());
  for (int c = 0; c < shape_.coefficients(); ++c) out(c) = values_(row, child, c);
  return out;
}

double CoefficientTensor::log_intensity(const RiskFactors& z, int child, int row) const {
  if (z.size() != shape_.coefficients()) throw DimensionError("risk-factor length does not match the model");
  double eta = 0.0;
  for (int c = 0; c < shape_.coefficients(); ++c) eta += z[c] * values_(row, child, c);
  return eta;
}

CoefficientTensor expand(const CompactParams& params) {
  const ModelShape& shape = params.shape();
  Tensor3 t({shape.rows(), shape.conditions, shape.coefficients()});
  for (int i = 0; i < shape.conditions; ++i) {
    for (int r = 0; r < shape.rows(); ++r) {
      const Eigen::VectorXd beta = params.cell_coefficients(i, r);
      for (int c = 0; c < shape.coefficients(); ++c) t(r, i, c) = beta(c);
    }
  }
  return {shape, std::move(t)};
}

CompactParams compact(const CoefficientTensor& tensor) {
  const ModelShape& shape = tensor.shape();
  CompactParams out(shape);
  for (int i = 0; i < shape.conditions; ++i) {
    const Eigen::VectorXd base = tensor.slice(0, i);
    out.group(i, 0) = base;
    out.group(i, 1) = tensor.slice(make_row(shape, 1, 0), i) - base;
    for (int g = 2; g < shape.groups(); ++g) {
      const int bit = shape.conditions - 2 - (g - 2);
      out.group(i, g) = tensor.slice(make_row(shape, 0, 1 << bit), i) - base;
    }
  }
  return out;
}

Eigen::VectorXd cell_design(const ModelShape& shape, int row, const RiskFactors& z) {
  if (z.size() != shape.coefficients()) throw DimensionError("risk-factor length does not match the model");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(shape.child_size());
  for (int g = 0; g < shape.groups(); ++g) {
    if (row_indicator(shape, row, g) != 0.0) x.segment(static_cast<Index>(g) * shape.coefficients(), shape.coefficients()) = z.values();
  }
  return x;
}

double guarded_exp(double exponent) {
  if (!std::isfinite(exponent)) throw OverflowError("non-finite log-intensity");
  if (exponent > kMaxExponent) {
    throw OverflowError("log-intensity " + std::to_string(exponent) + " exceeds the overflow guard of 700");
  }
  return std::exp(exponent);
}

}  // namespace dfctbn
