#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dfctbn/model.hpp"
#include "dfctbn/tensor.hpp"

namespace dfctbn {

struct MpcaConfig {
  /// Explicit (P1, P2, P3); when absent each P_n is the smallest dimension
  /// whose leading eigenvalues hold `energy_fraction` of the mode-n scatter.
  std::optional<std::array<Index, 3>> target_dims;
  double energy_fraction = 0.97;
  int max_rounds = 50;
  double tol = 1e-8;
};

/// Non-centered MPCA: per-mode orthonormal projections U^(n) (I_n x P_n).
struct MpcaModel {
  std::array<Eigen::MatrixXd, 3> projections;
  std::array<Index, 3> dims{0, 0, 0};
  /// Fraction of the full-data mode-n scatter held by the chosen P_n.
  std::array<double, 3> captured_variance_fraction{0.0, 0.0, 0.0};
  /// sum_i ||core_i||^2 at the initialization and after every round.
  std::vector<double> objective_trace;
  int rounds = 0;

  Tensor3::Dims input_dims() const {
    return {projections[0].rows(), projections[1].rows(), projections[2].rows()};
  }
};

MpcaModel mpca_fit(const std::vector<Tensor3>& samples, const MpcaConfig& config = {});
MpcaModel mpca_fit(const std::vector<CoefficientTensor>& samples, const MpcaConfig& config = {});

/// core = T x1 U1^T x2 U2^T x3 U3^T.
Tensor3 mpca_project(const MpcaModel& model, const Tensor3& tensor);
/// core x1 U1 x2 U2 x3 U3.
Tensor3 mpca_reconstruct(const MpcaModel& model, const Tensor3& core);

struct Reconstruction {
  Tensor3 residual;
  double norm = 0.0;
};

Reconstruction reconstruction_error(const MpcaModel& model, const Tensor3& tensor);

/// sum_i ||project(sample_i)||^2 for the model's current projections.
double mpca_objective(const MpcaModel& model, const std::vector<Tensor3>& samples);

}  // namespace dfctbn
