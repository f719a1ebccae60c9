#pragma once

// Extended Kalman filter over the compact coefficient vector. The state may
// cover every coefficient or only the surviving groups of a sparse fit; the
// remaining coefficients stay at their initial values.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dfctbn/ctbn.hpp"
#include "dfctbn/model.hpp"

namespace dfctbn {

struct ObservationCell {
  int child = 0;
  int row = 0;
  double exposure = 0.0;  // years
  double count = 0.0;     // observed exits
};

/// Counts observed over one visit interval, under the risk factors z.
struct VisitObservation {
  double time = 0.0;  // years; visits sharing a time form one update
  RiskFactors z;
  std::vector<ObservationCell> cells;

  /// Throws DataError unless exposures and counts are valid.
  void validate(const ModelShape& shape) const;
};

/// One observation per Visit record after the first, covering the time since
/// the previous Visit record. Transition records inside the interval split
/// the exposure between cells.
std::vector<VisitObservation> observations_from_trajectory(const Trajectory& trajectory, int conditions);

struct EkfConfig {
  /// sigma^2 of the default process noise sigma^2 * I.
  double process_noise = 1e-4;
  /// Diagonal of the initial covariance.
  double initial_variance = 1e-2;
  /// Track every coefficient instead of the surviving groups only.
  bool track_all = false;
  /// Group norm above which a group survives.
  double edge_threshold = 1e-6;
  /// Transition matrix over the tracked state; identity when absent.
  std::optional<Eigen::MatrixXd> transition;
  /// Diagonal jitter added when the innovation covariance is not positive definite.
  double jitter = 1e-9;
};

struct UpdateDiagnostics {
  double innovation_norm = 0.0;
  double jacobian_norm = 0.0;  // spectral norm of H
  double max_noise = 0.0;      // max diagonal entry of R
  bool jitter_applied = false;
  int observations = 0;
};

struct EkfState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd transition;
  Eigen::MatrixXd process_noise;
  int time_index = 0;
  double time = 0.0;
  /// 2-norm condition number of the transition matrix.
  double transition_condition = 1.0;
  std::optional<UpdateDiagnostics> last_update;
};

/// Maps the tracked state into the compact coefficient vector.
class TrackedCoordinates {
 public:
  TrackedCoordinates() = default;
  /// Tracks every coefficient.
  explicit TrackedCoordinates(const CompactParams& base);
  TrackedCoordinates(const CompactParams& base, std::vector<Index> tracked);
  /// Baseline groups plus every group with norm above the threshold.
  static TrackedCoordinates surviving(const CompactParams& base, double edge_threshold);

  const CompactParams& base() const { return base_; }
  const std::vector<Index>& indices() const { return tracked_; }
  Index size() const { return static_cast<Index>(tracked_.size()); }

  Eigen::VectorXd restrict(const Eigen::VectorXd& compact) const;
  CompactParams embed(const Eigen::VectorXd& state) const;

 private:
  CompactParams base_;
  std::vector<Index> tracked_;
};

struct ObservationModel {
  Eigen::VectorXd predicted;  // exposure * exp(z.beta) per cell
  Eigen::MatrixXd jacobian;   // cells x tracked coordinates
  Eigen::VectorXd observed;
};

/// Predicted means and Jacobian H = diag(yhat) X over the tracked
/// coordinates. Zero-exposure cells get zero rows. Throws OverflowError.
ObservationModel observation_model(const TrackedCoordinates& coords, const Eigen::VectorXd& state,
                                   const std::vector<const VisitObservation*>& visits);
Eigen::MatrixXd observation_jacobian(const CompactParams& params, const VisitObservation& obs);

EkfState initial_state(const TrackedCoordinates& coords, const EkfConfig& config);

/// mean <- F mean, P <- F P F^T + Q, symmetrized.
EkfState predict_step(const EkfState& state);

/// Kalman update with R = diag(yhat). Zero-exposure cells are skipped.
EkfState update_step(const EkfState& state, const TrackedCoordinates& coords,
                     const std::vector<const VisitObservation*>& visits, double jitter = 1e-9);
EkfState update_step(const EkfState& state, const TrackedCoordinates& coords, const VisitObservation& obs,
                     double jitter = 1e-9);

/// Posterior covariance in Joseph form, for cross-checks.
Eigen::MatrixXd joseph_covariance(const Eigen::MatrixXd& prior, const Eigen::MatrixXd& gain,
                                  const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& noise_diag);
/// Kalman gain P H^T (H P H^T + R)^-1 via a Cholesky solve.
Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& prior, const Eigen::MatrixXd& jacobian,
                            const Eigen::VectorXd& noise_diag, double jitter, bool* jitter_applied = nullptr);

struct TransitionEstimate {
  Eigen::MatrixXd transition;
  bool insufficient_history = false;
  bool rank_deficient = false;
};

/// Ridge least squares of beta_t ~ F beta_{t-1}, shrunk toward the
/// identity: F = (B1 B0^T + r I)(B0 B0^T + r I)^-1. Identity when fewer
/// than three snapshots are available.
TransitionEstimate estimate_transition_matrix(const std::vector<Eigen::VectorXd>& history, double ridge = 1e-6);

struct FilterRun {
  TrackedCoordinates coords;
  /// Entry 0 is the initial state; one entry per distinct visit time follows.
  std::vector<EkfState> states;
  std::vector<CoefficientTensor> tensors;
};

FilterRun run_filter(const CompactParams& initial, const std::vector<VisitObservation>& visits, const EkfConfig& config);

struct StabilityConfig {
  double transition_bound = 10.0;   // alpha
  double jacobian_bound = 1e6;      // beta
  double noise_bound = 1e6;         // delta
  double error_bound = 1e3;         // epsilon
  double singular_tolerance = 1e-10;
};

struct StabilityReport {
  double sup_transition_norm = 0.0;
  double sup_jacobian_norm = 0.0;
  double min_transition_singular = 0.0;
  double max_process_noise = 0.0;
  double max_observation_noise = 0.0;
  /// ||e|| per state: innovation norm plus sqrt(trace P).
  std::vector<double> error_sequence;
  double max_error = 0.0;
  bool bounded_dynamics = true;       // condition 1
  bool nonsingular_transition = true; // condition 2
  bool bounded_noise = true;          // condition 3, noise part
  bool bounded_error = true;          // condition 3, ||e|| <= epsilon
  bool all_pass() const { return bounded_dynamics && nonsingular_transition && bounded_noise && bounded_error; }
};

StabilityReport stability_report(const std::vector<EkfState>& states, const StabilityConfig& config = {});

/// Mean squared difference between two coefficient vectors.
double coefficient_mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace dfctbn
