#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dfctbn/chart.hpp"
#include "dfctbn/ctbn.hpp"
#include "dfctbn/ekf.hpp"
#include "dfctbn/model.hpp"
#include "dfctbn/mpca.hpp"
#include "dfctbn/random.hpp"

namespace dfctbn {

/// One covariate. Level l is encoded as l / (levels - 1), so binaries are 0/1
/// and ordinal bands are spread evenly over [0, 1].
struct FactorSpec {
  std::string name;
  bool modifiable = false;
  std::vector<std::string> labels;

  int levels() const { return static_cast<int>(labels.size()); }
  double encode(int level) const;
  /// Accepts a label (case-insensitive) or a level number.
  int parse_level(const std::string& text) const;
};

/// Condition names plus the covariate layout of z (after the intercept).
struct FactorSchema {
  std::vector<std::string> conditions;
  std::vector<FactorSpec> factors;

  /// diabetes, obesity, cognitive_impairment, hyperlipidemia, hypertension;
  /// diet, exercise, smoking, drinking, age_band, gender, education_band.
  static FactorSchema standard();

  ModelShape shape() const { return {static_cast<int>(conditions.size()), static_cast<int>(factors.size())}; }
  /// Covariate index of a factor; throws InputError for unknown names.
  int factor_index(const std::string& name) const;
  int condition_index(const std::string& name) const;
  /// Comma-separated "name:label|label" list, stored in model metadata.
  std::string describe() const;
  static FactorSchema from_description(const std::string& text);

  friend bool operator==(const FactorSchema& a, const FactorSchema& b);
};

/// Independent categorical draw per factor.
struct FactorDistribution {
  /// probabilities[f][level]; each row sums to 1.
  std::vector<std::vector<double>> probabilities;

  static FactorDistribution uniform(const FactorSchema& schema);
  void validate(const FactorSchema& schema) const;
  Eigen::VectorXd sample(const FactorSchema& schema, Rng& rng) const;
};

/// Visits at start + j * interval for j = 0 .. visits - 1 (years).
struct VisitSchedule {
  double interval = 1.0;
  int visits = 3;

  void validate() const;
  std::vector<double> times() const;
};

struct CohortConfig {
  int patients = 0;
  VisitSchedule schedule;
  FactorDistribution factors;
  /// Probability that each condition is active at the first visit.
  double initial_prevalence = 0.25;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Per patient: z from `config.factors`, conditions evolved by the sampler
/// between visits. Transition records are kept, so the exposure is exact.
std::vector<Trajectory> generate_cohort(const CompactParams& truth, const FactorSchema& schema,
                                        const CohortConfig& config);

struct SparseTruthConfig {
  int min_edges = 2;
  int max_edges = 3;
  double min_magnitude = 0.2;
  double max_magnitude = 1.0;
  /// Baseline onset rates per year, drawn log-uniformly.
  double min_rate = 0.05;
  double max_rate = 0.2;
  /// Log-ratio of the remission rate to the onset rate.
  double own_state_log_ratio = -3.0;
};

/// Baseline group: log-rate intercept plus covariate effects with magnitudes in
/// [min, max]; unhealthy behaviors raise the rate. Each child gets
/// min..max_edges parents whose edge group carries only an intercept term.
CompactParams sample_sparse_truth(const FactorSchema& schema, std::uint64_t seed, const SparseTruthConfig& config = {});

/// Edges of the truth as planted: A(parent, child) true for every nonzero edge group.
Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> planted_structure(const CompactParams& truth);

/// `strata_per_period` observations at each time t = 1..periods, each with its
/// own z draw and every (child, row) cell at the given exposure; counts are
/// Poisson around the truth. Observations sharing a time form one filter update.
std::vector<VisitObservation> pooled_observations(const CompactParams& truth, const FactorSchema& schema,
                                                  const FactorDistribution& factors, int periods,
                                                  double exposure_per_cell, std::uint64_t seed,
                                                  int strata_per_period = 1);

enum class Cadence { Months, Years };

struct FactorChange {
  /// Observation number from which the new value is in force (1-based).
  int observation = 0;
  std::string factor;
  std::string value;
};

/// A single monitored patient.
struct ScenarioSpec {
  std::string name;
  std::vector<std::string> baseline_conditions;
  /// (factor, label) for every factor of the schema.
  std::vector<std::pair<std::string, std::string>> baseline_factors;
  std::vector<FactorChange> changes;
  int phase1_length = 12;
  int phase2_length = 36;
  Cadence cadence = Cadence::Months;
  std::uint64_t seed = 0;

  ChartConfig chart;
  EkfConfig ekf;
  MpcaConfig mpca;

  int total_observations() const { return phase1_length + phase2_length; }
  double step_years() const { return cadence == Cadence::Months ? 1.0 / 12.0 : 1.0; }
  void validate(const FactorSchema& schema) const;
  ConditionProfile initial_profile(const FactorSchema& schema) const;
  /// Covariates in force during observation `obs` (1-based).
  Eigen::VectorXd covariates_at(const FactorSchema& schema, int obs) const;
};

struct ChangeDetection {
  FactorChange change;
  /// First signal at or after the change, as an observation number.
  std::optional<int> first_signal;
  /// first_signal - change.observation.
  std::optional<int> delay;
};

struct ScenarioResult {
  Trajectory trajectory;
  FilterRun filter;
  MpcaModel mpca;
  ChartState chart;
  std::vector<double> phase1_errors;
  /// Phase-II points; index i is observation phase1_length + i + 1.
  ChartSeries series;
  std::optional<int> first_signal;
  std::vector<ChangeDetection> detections;
};

/// The patient's path: a Visit record per observation (carrying the factors in
/// force for the next interval) plus the transitions in between.
Trajectory simulate_scenario_path(const CompactParams& truth, const FactorSchema& schema, const ScenarioSpec& spec);

ScenarioResult run_scenario(const CompactParams& truth, const FactorSchema& schema, const ScenarioSpec& spec);

/// Monitoring cases: a in control, b diet, c drinking, d exercise and drinking
/// in opposite directions (all monthly), e a yearly two-factor change.
ScenarioSpec standard_scenario(char which, std::uint64_t seed = 1);

}  // namespace dfctbn
