#include "dfctbn/ctbn.hpp"

#include <cmath>
#include <map>

#include "dfctbn/error.hpp"

namespace dfctbn {
namespace {

void check_child(const ModelShape& shape, int child, int parent_config) {
  if (child < 0 || child >= shape.conditions) throw DimensionError("child index out of range");
  if (parent_config < 0 || parent_config >= shape.parent_configs()) {
    throw DimensionError("parent configuration out of range");
  }
}

template <class Model>
Cim make_cim(const Model& model, const RiskFactors& z, int child, int parent_config) {
  const ModelShape& shape = model.shape();
  check_child(shape, child, parent_config);
  const double up = guarded_exp(model.log_intensity(z, child, make_row(shape, 0, parent_config)));
  const double down = guarded_exp(model.log_intensity(z, child, make_row(shape, 1, parent_config)));
  Cim cim;
  cim.matrix << -up, up, down, -down;
  return cim;
}

double child_rate(const CoefficientTensor& tensor, const RiskFactors& z, const ConditionProfile& profile, int child) {
  return guarded_exp(tensor.log_intensity(z, child, profile.row(child)));
}

}  // namespace

Cim build_cim(const CoefficientTensor& tensor, const RiskFactors& z, int child, int parent_config) {
  return make_cim(tensor, z, child, parent_config);
}

Cim build_cim(const CompactParams& params, const RiskFactors& z, int child, int parent_config) {
  return make_cim(params, z, child, parent_config);
}

Sojourn sojourn(double q, double t) {
  if (!(q > 0.0)) throw InputError("sojourn rate must be positive");
  if (!(t >= 0.0)) throw InputError("sojourn time must be non-negative");
  return {q * std::exp(-q * t), -std::expm1(-q * t)};
}

double emergence_probability(const CoefficientTensor& tensor, const RiskFactors& z, const ConditionProfile& profile,
                             int child, double horizon) {
  if (profile.size() != tensor.shape().conditions) throw DimensionError("profile length does not match the model");
  if (child < 0 || child >= profile.size()) throw DimensionError("child index out of range");
  if (profile[child] != 0) throw InputError("condition " + std::to_string(child) + " is already active");
  if (!(horizon >= 0.0)) throw InputError("horizon must be non-negative");
  if (horizon == 0.0) return 0.0;
  return -std::expm1(-child_rate(tensor, z, profile, child) * horizon);
}

int Trajectory::transitions() const {
  int n = 0;
  for (const auto& e : events) n += e.kind == EventKind::Transition;
  return n;
}

void Trajectory::validate() const {
  for (std::size_t k = 0; k < events.size(); ++k) {
    const auto& e = events[k];
    if (!std::isfinite(e.time)) throw DataError("patient " + patient_id + ": non-finite event time");
    if (k > 0) {
      if (e.time <= events[k - 1].time) {
        throw DataError("patient " + patient_id + ": event times are not strictly increasing");
      }
      if (e.profile.size() != events[0].profile.size() || e.z.size() != events[0].z.size()) {
        throw DataError("patient " + patient_id + ": inconsistent event dimensions");
      }
    }
  }
}

ConditionProfile simulate_interval(const CoefficientTensor& tensor, const RiskFactors& z, ConditionProfile profile,
                                   double start, double end, Rng& rng, std::vector<TrajectoryEvent>& out) {
  const int d = tensor.shape().conditions;
  if (profile.size() != d) throw DimensionError("profile length does not match the model");
  Eigen::VectorXd rates(d);
  double t = start;
  while (true) {
    for (int i = 0; i < d; ++i) rates(i) = child_rate(tensor, z, profile, i);
    const double total = rates.sum();
    if (!(total > 0.0)) break;
    t += rng.exponential(total);
    if (t > end) break;
    // Select the clock that fired with probability proportional to its rate.
    double target = rng.uniform() * total;
    int fired = d - 1;
    for (int i = 0; i < d; ++i) {
      target -= rates(i);
      if (target < 0.0) {
        fired = i;
        break;
      }
    }
    profile = profile.flipped(fired);
    out.push_back({t, profile, z, EventKind::Transition});
  }
  return profile;
}

Trajectory sample_trajectory(const CoefficientTensor& tensor, const RiskFactors& z, const ConditionProfile& initial,
                             double horizon, std::uint64_t seed) {
  if (!(horizon > 0.0)) throw InputError("horizon must be positive");
  if (z.size() != tensor.shape().coefficients()) throw DimensionError("risk-factor length does not match the model");
  Rng rng(seed);
  Trajectory traj;
  traj.events.push_back({0.0, initial, z, EventKind::Visit});
  const ConditionProfile last = simulate_interval(tensor, z, initial, 0.0, horizon, rng, traj.events);
  if (traj.events.back().time < horizon) traj.events.push_back({horizon, last, z, EventKind::Visit});
  return traj;
}

// ---------------------------------------------------------------------------

SufficientStats::SufficientStats(int conditions)
    : conditions_(conditions),
      exposure_(Eigen::MatrixXd::Zero(1 << conditions, conditions)),
      counts_(Eigen::MatrixXd::Zero(1 << conditions, conditions)) {}

double SufficientStats::exposure(int child, int state, int parent_config) const {
  return exposure_((state << (conditions_ - 1)) | parent_config, child);
}

double SufficientStats::count(int child, int state, int parent_config) const {
  return counts_((state << (conditions_ - 1)) | parent_config, child);
}

void SufficientStats::add_interval(const ConditionProfile& profile, double duration, const std::vector<int>& flipped) {
  if (profile.size() != conditions_) throw DimensionError("profile length does not match the statistics");
  for (int i = 0; i < conditions_; ++i) exposure_(profile.row(i), i) += duration;
  for (int i : flipped) counts_(profile.row(i), i) += 1.0;
}

SufficientStats& SufficientStats::operator+=(const SufficientStats& other) {
  if (other.conditions_ != conditions_) throw DimensionError("statistics dimensions differ");
  exposure_ += other.exposure_;
  counts_ += other.counts_;
  return *this;
}

namespace {

template <class Sink>
void for_each_interval(const std::vector<Trajectory>& trajectories, int conditions, Sink&& sink) {
  std::vector<int> flipped;
  for (const auto& traj : trajectories) {
    traj.validate();
    for (std::size_t k = 0; k + 1 < traj.events.size(); ++k) {
      const auto& cur = traj.events[k];
      const auto& next = traj.events[k + 1];
      if (cur.profile.size() != conditions) throw DimensionError("profile length does not match the model");
      flipped.clear();
      for (int i = 0; i < conditions; ++i) {
        if (next.profile[i] != cur.profile[i]) flipped.push_back(i);
      }
      sink(cur, next.time - cur.time, flipped);
    }
  }
}

}  // namespace

SufficientStats sufficient_statistics(const std::vector<Trajectory>& trajectories, int conditions) {
  SufficientStats stats(conditions);
  for_each_interval(trajectories, conditions, [&](const TrajectoryEvent& e, double dt, const std::vector<int>& f) {
    stats.add_interval(e.profile, dt, f);
  });
  return stats;
}

std::vector<RiskStratum> stratify(const std::vector<Trajectory>& trajectories, int conditions) {
  std::map<RiskFactors, SufficientStats> strata;
  for_each_interval(trajectories, conditions, [&](const TrajectoryEvent& e, double dt, const std::vector<int>& f) {
    auto it = strata.try_emplace(e.z, conditions).first;
    it->second.add_interval(e.profile, dt, f);
  });
  std::vector<RiskStratum> out;
  out.reserve(strata.size());
  for (auto& [z, stats] : strata) out.push_back({z, std::move(stats)});
  return out;
}

}  // namespace dfctbn
