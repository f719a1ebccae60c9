#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dfctbn/model.hpp"
#include "dfctbn/mpca.hpp"

namespace dfctbn {

enum class ChartMode { Ewma, Mewma };

struct ChartConfig {
  double lambda = 0.15;
  double width = 1.5;
  ChartMode mode = ChartMode::Ewma;
  /// Univariate only: ignore the lower limit.
  bool upper_only = false;
};

/// Phase-I samples below this count produce a calibration warning.
inline constexpr std::size_t kRecommendedPhaseOne = 20;

/// EWMA / MEWMA chart. Univariate Z starts at mu0 and is plotted directly;
/// multivariate Z is accumulated on x - mu0 from zero.
struct ChartState {
  ChartConfig config;
  Eigen::VectorXd mu0;
  double sigma = 0.0;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd covariance_inverse;
  /// MEWMA upper limit on T^2 (chi-square quantile at 2*Phi(L) - 1).
  double t2_limit = 0.0;
  Eigen::VectorXd z;
  std::size_t index = 0;
  std::vector<std::string> warnings;

  std::size_t features() const { return static_cast<std::size_t>(mu0.size()); }
};

struct ChartLimits {
  double ucl = 0.0;
  double cl = 0.0;
  double lcl = 0.0;
};

/// [1 - (1 - lambda)^(2i)] * lambda / (2 - lambda); i >= 1.
double ewma_variance_factor(double lambda, std::size_t i);
ChartLimits chart_limits(const ChartState& state, std::size_t i);
/// Limits as i -> infinity.
ChartLimits asymptotic_limits(const ChartState& state);

ChartState chart_calibrate(const std::vector<double>& phase1, const ChartConfig& config = {});
ChartState chart_calibrate(const std::vector<Eigen::VectorXd>& phase1, const ChartConfig& config);

struct ChartPoint {
  std::size_t index = 0;
  double time = 0.0;
  double statistic = 0.0;
  double ucl = 0.0;
  double lcl = 0.0;
  bool signal = false;
};

ChartPoint chart_update(ChartState& state, const Eigen::VectorXd& x);
ChartPoint chart_update(ChartState& state, double x);

/// Raw recursion Z_i = lambda x_i + (1 - lambda) Z_{i-1} from `z0`.
std::vector<double> ewma_series(const std::vector<double>& xs, double lambda, double z0 = 0.0);

/// Monitoring feature of one tensor: [||E||] for EWMA, per-child ||E(:, c, :)||
/// for MEWMA.
Eigen::VectorXd residual_features(const MpcaModel& model, const Tensor3& tensor, ChartMode mode);

struct ChartSeries {
  std::vector<ChartPoint> points;

  std::optional<std::size_t> first_signal() const;
  std::size_t signal_count() const;
};

/// Signals do not stop monitoring. `times` may be empty (indices used) or
/// must match `tensors` in length.
ChartSeries monitor_stream(const MpcaModel& model, ChartState chart, const std::vector<Tensor3>& tensors,
                           const std::vector<double>& times = {});
ChartSeries monitor_stream(const MpcaModel& model, ChartState chart,
                           const std::vector<CoefficientTensor>& tensors, const std::vector<double>& times = {});

/// MPCA and chart limits fitted on the first `phase1` tensors; the rest are
/// monitored.
struct MonitorRun {
  MpcaModel mpca;
  ChartState chart;
  std::vector<double> phase1_errors;
  ChartSeries series;
};

/// Throws DimensionError unless 2 <= phase1 <= tensors.size().
MonitorRun calibrate_and_monitor(const std::vector<Tensor3>& tensors, const std::vector<double>& times, int phase1,
                                 const ChartConfig& chart, const MpcaConfig& mpca);

}  // namespace dfctbn
