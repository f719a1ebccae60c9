#include "dfctbn/mpca.hpp"

#include <cmath>

#include "dfctbn/error.hpp"

namespace dfctbn {
namespace {

/// Eigenvectors of a symmetric matrix, leading (largest eigenvalue) first.
void leading_eigen(const Eigen::MatrixXd& scatter, Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scatter);
  if (es.info() != Eigen::Success) throw NumericalError("mode scatter eigendecomposition failed");
  values = es.eigenvalues().reverse();
  vectors = es.eigenvectors().rowwise().reverse();
}

Tensor3 project_except(const std::array<Eigen::MatrixXd, 3>& u, const Tensor3& t, int skip) {
  Tensor3 y = t;
  for (int m = 0; m < 3; ++m) {
    if (m != skip) y = mode_product(y, u[static_cast<std::size_t>(m)].transpose(), m);
  }
  return y;
}

Eigen::MatrixXd mode_scatter(const std::vector<Tensor3>& samples, const std::array<Eigen::MatrixXd, 3>* u, int mode) {
  const Index n = samples.front().dim(mode);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
  for (const auto& x : samples) {
    const Eigen::MatrixXd a = (u ? project_except(*u, x, mode) : x).unfold(mode);
    s.noalias() += a * a.transpose();
  }
  return 0.5 * (s + s.transpose());
}

}  // namespace

MpcaModel mpca_fit(const std::vector<Tensor3>& samples, const MpcaConfig& config) {
  if (samples.empty()) throw InputError("MPCA needs at least one sample");
  const auto dims = samples.front().dims();
  for (const auto& s : samples) {
    if (s.dims() != dims) throw DimensionError("MPCA samples differ in shape");
  }
  if (!(config.energy_fraction > 0.0 && config.energy_fraction <= 1.0)) {
    throw InputError("MPCA energy fraction must lie in (0, 1]");
  }
  if (config.target_dims) {
    for (int m = 0; m < 3; ++m) {
      const Index p = (*config.target_dims)[static_cast<std::size_t>(m)];
      if (p < 1 || p > dims[static_cast<std::size_t>(m)]) {
        throw DimensionError("MPCA target dimension " + std::to_string(p) + " exceeds mode size " +
                             std::to_string(dims[static_cast<std::size_t>(m)]));
      }
    }
  }

  MpcaModel model;
  // Initialization from the full-data mode scatter (truncated HOSVD).
  for (int m = 0; m < 3; ++m) {
    const auto um = static_cast<std::size_t>(m);
    Eigen::VectorXd ev;
    Eigen::MatrixXd vec;
    leading_eigen(mode_scatter(samples, nullptr, m), ev, vec);
    ev = ev.cwiseMax(0.0);
    const double total = ev.sum();
    Index p = dims[um];
    if (config.target_dims) {
      p = (*config.target_dims)[um];
    } else if (total > 0.0) {
      double acc = 0.0;
      for (Index k = 0; k < ev.size(); ++k) {
        acc += ev(k);
        if (acc >= config.energy_fraction * total * (1.0 - 1e-12)) {
          p = k + 1;
          break;
        }
      }
    } else {
      p = 1;
    }
    model.dims[um] = p;
    model.projections[um] = vec.leftCols(p);
    model.captured_variance_fraction[um] = total > 0.0 ? ev.head(p).sum() / total : 1.0;
  }
  model.objective_trace.push_back(mpca_objective(model, samples));

  for (model.rounds = 0; model.rounds < config.max_rounds;) {
    for (int m = 0; m < 3; ++m) {
      const auto um = static_cast<std::size_t>(m);
      Eigen::VectorXd ev;
      Eigen::MatrixXd vec;
      leading_eigen(mode_scatter(samples, &model.projections, m), ev, vec);
      model.projections[um] = vec.leftCols(model.dims[um]);
    }
    ++model.rounds;
    const double prev = model.objective_trace.back();
    const double cur = mpca_objective(model, samples);
    model.objective_trace.push_back(cur);
    if (std::abs(cur - prev) <= config.tol * std::max(std::abs(cur), 1e-300)) break;
  }
  return model;
}

MpcaModel mpca_fit(const std::vector<CoefficientTensor>& samples, const MpcaConfig& config) {
  std::vector<Tensor3> raw;
  raw.reserve(samples.size());
  for (const auto& s : samples) raw.push_back(s.values());
  return mpca_fit(raw, config);
}

Tensor3 mpca_project(const MpcaModel& model, const Tensor3& tensor) {
  if (tensor.dims() != model.input_dims()) throw DimensionError("tensor shape does not match the MPCA model");
  Tensor3 core = tensor;
  for (int m = 0; m < 3; ++m) core = mode_product(core, model.projections[static_cast<std::size_t>(m)].transpose(), m);
  return core;
}

Tensor3 mpca_reconstruct(const MpcaModel& model, const Tensor3& core) {
  const Tensor3::Dims want{model.dims[0], model.dims[1], model.dims[2]};
  if (core.dims() != want) throw DimensionError("core shape does not match the MPCA model");
  Tensor3 out = core;
  for (int m = 0; m < 3; ++m) out = mode_product(out, model.projections[static_cast<std::size_t>(m)], m);
  return out;
}

Reconstruction reconstruction_error(const MpcaModel& model, const Tensor3& tensor) {
  Reconstruction r{tensor - mpca_reconstruct(model, mpca_project(model, tensor)), 0.0};
  r.norm = r.residual.norm();
  return r;
}

double mpca_objective(const MpcaModel& model, const std::vector<Tensor3>& samples) {
  double s = 0.0;
  for (const auto& x : samples) s += mpca_project(model, x).squared_norm();
  return s;
}

}  // namespace dfctbn
