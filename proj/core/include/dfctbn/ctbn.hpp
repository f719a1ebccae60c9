#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dfctbn/model.hpp"
#include "dfctbn/random.hpp"

namespace dfctbn {

/// 2x2 conditional intensity matrix of one binary condition given its
/// parent configuration. Rates are per year.
struct Cim {
  Eigen::Matrix2d matrix = Eigen::Matrix2d::Zero();

  double rate(int from, int to) const { return matrix(from, to); }
  /// Total exit rate q_{x|u}; for binary states this is the single off-diagonal.
  double exit_rate(int from) const { return -matrix(from, from); }
};

Cim build_cim(const CoefficientTensor& tensor, const RiskFactors& z, int child, int parent_config);
Cim build_cim(const CompactParams& params, const RiskFactors& z, int child, int parent_config);

struct Sojourn {
  double pdf = 0.0;
  double cdf = 0.0;
};

/// Exponential holding time with rate q evaluated at t.
Sojourn sojourn(double q, double t);

/// Probability that `child` (inactive in `profile`) becomes active within
/// `horizon` years, holding parents and z fixed.
double emergence_probability(const CoefficientTensor& tensor, const RiskFactors& z, const ConditionProfile& profile,
                             int child, double horizon);

enum class EventKind { Visit, Transition };

struct TrajectoryEvent {
  double time = 0.0;
  ConditionProfile profile;
  RiskFactors z;
  EventKind kind = EventKind::Visit;

  friend bool operator==(const TrajectoryEvent&, const TrajectoryEvent&) = default;
};

/// Events ordered by strictly increasing time. The profile and z of an event
/// hold until the next event.
struct Trajectory {
  std::string patient_id;
  std::vector<TrajectoryEvent> events;

  double duration() const { return events.empty() ? 0.0 : events.back().time - events.front().time; }
  int transitions() const;
  /// Throws DataError on non-increasing times or inconsistent dimensions.
  void validate() const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Appends the transitions of the process on (start, end] to `out`, starting
/// from `profile` at `start` with z held fixed. Returns the final profile.
/// Every appended event flips exactly one condition.
ConditionProfile simulate_interval(const CoefficientTensor& tensor, const RiskFactors& z, ConditionProfile profile,
                                   double start, double end, Rng& rng, std::vector<TrajectoryEvent>& out);

/// Competing-clocks sample path on [0, horizon]: an initial Visit record,
/// one Transition record per event and a closing Visit record at `horizon`.
Trajectory sample_trajectory(const CoefficientTensor& tensor, const RiskFactors& z, const ConditionProfile& initial,
                             double horizon, std::uint64_t seed);

/// Exposure (years) and exit counts per (row, child), where the row encodes
/// the child's own state and its parent configuration.
class SufficientStats {
 public:
  SufficientStats() = default;
  explicit SufficientStats(int conditions);

  int conditions() const { return conditions_; }
  int rows() const { return static_cast<int>(exposure_.rows()); }

  double exposure(int child, int state, int parent_config) const;
  double count(int child, int state, int parent_config) const;

  /// rows x conditions, indexed (row, child).
  const Eigen::MatrixXd& exposure() const { return exposure_; }
  const Eigen::MatrixXd& counts() const { return counts_; }
  Eigen::MatrixXd& exposure() { return exposure_; }
  Eigen::MatrixXd& counts() { return counts_; }

  double total_exposure(int child) const { return exposure_.col(child).sum(); }
  double total_count(int child) const { return counts_.col(child).sum(); }
  bool empty() const { return exposure_.size() == 0 || exposure_.isZero(0.0); }

  /// Accumulates one interval spent in `profile` for `duration` years; the
  /// children in `flipped` exit their state at its end.
  void add_interval(const ConditionProfile& profile, double duration, const std::vector<int>& flipped);

  SufficientStats& operator+=(const SufficientStats& other);
  friend bool operator==(const SufficientStats& a, const SufficientStats& b) {
    return a.conditions_ == b.conditions_ && a.exposure_ == b.exposure_ && a.counts_ == b.counts_;
  }

 private:
  int conditions_ = 0;
  Eigen::MatrixXd exposure_;
  Eigen::MatrixXd counts_;
};

SufficientStats sufficient_statistics(const std::vector<Trajectory>& trajectories, int conditions);

/// Statistics restricted to the time spent under one risk-factor vector.
struct RiskStratum {
  RiskFactors z;
  SufficientStats stats;
};

/// Splits the statistics by the z in force during each interval. Strata are
/// ordered lexicographically by z.
std::vector<RiskStratum> stratify(const std::vector<Trajectory>& trajectories, int conditions);

}  // namespace dfctbn
