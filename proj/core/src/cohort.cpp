#include "dfctbn/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dfctbn/error.hpp"
#include "dfctbn/parallel.hpp"

namespace dfctbn {
namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string patient_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%05d", i + 1);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  return out;
}

}  // namespace

double FactorSpec::encode(int level) const {
  if (level < 0 || level >= levels()) throw InputError("level " + std::to_string(level) + " out of range for " + name);
  return levels() == 1 ? 0.0 : static_cast<double>(level) / static_cast<double>(levels() - 1);
}

int FactorSpec::parse_level(const std::string& text) const {
  const std::string t = lower(text);
  for (int l = 0; l < levels(); ++l) {
    if (lower(labels[static_cast<std::size_t>(l)]) == t) return l;
  }
  int level = -1;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), level);
  if (res.ec == std::errc() && res.ptr == t.data() + t.size() && level >= 0 && level < levels()) return level;
  throw InputError("unknown value '" + text + "' for factor " + name);
}

FactorSchema FactorSchema::standard() {
  FactorSchema s;
  s.conditions = {"diabetes", "obesity", "cognitive_impairment", "hyperlipidemia", "hypertension"};
  s.factors = {
      {"diet", true, {"unhealthy", "healthy"}},
      {"exercise", true, {"no", "yes"}},
      {"smoking", true, {"no", "yes"}},
      {"drinking", true, {"no", "yes"}},
      {"age_band", false, {"18-30", "31-35", "36-45", "46-55", "56-65", "66+"}},
      {"gender", false, {"female", "male"}},
      {"education_band", false, {"below-high-school", "high-school", "some-college", "college"}},
  };
  return s;
}

int FactorSchema::factor_index(const std::string& name) const {
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i].name == name) return static_cast<int>(i);
  }
  throw InputError("unknown factor '" + name + "'");
}

int FactorSchema::condition_index(const std::string& name) const {
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    if (conditions[i] == name) return static_cast<int>(i);
  }
  throw InputError("unknown condition '" + name + "'");
}

std::string FactorSchema::describe() const {
  std::string out;
  for (const auto& c : conditions) out += (out.empty() ? "" : ",") + c;
  out += ";";
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const auto& f = factors[i];
    out += (i ? "," : "") + f.name + (f.modifiable ? "*" : "") + ":";
    for (std::size_t l = 0; l < f.labels.size(); ++l) out += (l ? "|" : "") + f.labels[l];
  }
  return out;
}

FactorSchema FactorSchema::from_description(const std::string& text) {
  const auto semi = text.find(';');
  if (semi == std::string::npos || text.find(';', semi + 1) != std::string::npos) {
    throw InputError("malformed schema description");
  }
  FactorSchema s;
  s.conditions = split(text.substr(0, semi), ',');
  for (const auto& item : split(text.substr(semi + 1), ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos || colon == 0) throw InputError("malformed factor entry '" + item + "'");
    FactorSpec f;
    f.name = item.substr(0, colon);
    if (f.name.back() == '*') {
      f.modifiable = true;
      f.name.pop_back();
    }
    f.labels = split(item.substr(colon + 1), '|');
    if (f.labels.size() < 2) throw InputError("factor " + f.name + " needs at least two levels");
    s.factors.push_back(std::move(f));
  }
  if (s.conditions.size() < 2) throw InputError("schema needs at least two conditions");
  return s;
}

bool operator==(const FactorSchema& a, const FactorSchema& b) { return a.describe() == b.describe(); }

FactorDistribution FactorDistribution::uniform(const FactorSchema& schema) {
  FactorDistribution d;
  for (const auto& f : schema.factors) {
    d.probabilities.emplace_back(static_cast<std::size_t>(f.levels()), 1.0 / f.levels());
  }
  return d;
}

void FactorDistribution::validate(const FactorSchema& schema) const {
  if (probabilities.size() != schema.factors.size()) throw DimensionError("factor distribution size mismatch");
  for (std::size_t f = 0; f < probabilities.size(); ++f) {
    const auto& p = probabilities[f];
    if (static_cast<int>(p.size()) != schema.factors[f].levels()) {
      throw DimensionError("factor distribution of " + schema.factors[f].name + " has the wrong number of levels");
    }
    double s = 0.0;
    for (double x : p) {
      if (!(x >= 0.0)) throw InputError("negative level probability");
      s += x;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InputError("level probabilities of " + schema.factors[f].name + " do not sum to 1");
  }
}

Eigen::VectorXd FactorDistribution::sample(const FactorSchema& schema, Rng& rng) const {
  Eigen::VectorXd z(static_cast<Index>(schema.factors.size()));
  for (std::size_t f = 0; f < schema.factors.size(); ++f) {
    const double u = rng.uniform();
    double acc = 0.0;
    int level = schema.factors[f].levels() - 1;
    for (int l = 0; l < schema.factors[f].levels(); ++l) {
      acc += probabilities[f][static_cast<std::size_t>(l)];
      if (u < acc) {
        level = l;
        break;
      }
    }
    z(static_cast<Index>(f)) = schema.factors[f].encode(level);
  }
  return z;
}

void VisitSchedule::validate() const {
  if (!(interval > 0.0) || !std::isfinite(interval)) throw InputError("visit interval must be positive");
  if (visits < 1) throw InputError("schedule needs at least one visit");
}

std::vector<double> VisitSchedule::times() const {
  std::vector<double> t;
  for (int j = 0; j < visits; ++j) t.push_back(j * interval);
  return t;
}

std::vector<Trajectory> generate_cohort(const CompactParams& truth, const FactorSchema& schema,
                                        const CohortConfig& config) {
  if (config.patients < 0) throw InputError("patient count must be non-negative");
  config.schedule.validate();
  config.factors.validate(schema);
  if (truth.shape() != schema.shape()) throw DimensionError("truth model does not match the factor schema");
  const CoefficientTensor tensor = expand(truth);
  const auto times = config.schedule.times();
  const int d = schema.shape().conditions;
  const std::uint64_t base = derive_seed(config.seed, "cohort");

  std::vector<Trajectory> cohort(static_cast<std::size_t>(config.patients));
  parallel_for(config.patients, config.threads, [&](int i) {
    Rng rng(derive_seed(base, static_cast<std::uint64_t>(i)));
    const RiskFactors z = RiskFactors::from_covariates(config.factors.sample(schema, rng));
    std::vector<std::uint8_t> states(static_cast<std::size_t>(d));
    for (auto& s : states) s = rng.bernoulli(config.initial_prevalence) ? 1 : 0;
    ConditionProfile profile(states);
    Trajectory& t = cohort[static_cast<std::size_t>(i)];
    t.patient_id = patient_id(i);
    t.events.push_back({times[0], profile, z, EventKind::Visit});
    for (std::size_t v = 1; v < times.size(); ++v) {
      profile = simulate_interval(tensor, z, profile, times[v - 1], times[v], rng, t.events);
      t.events.push_back({times[v], profile, z, EventKind::Visit});
    }
  });
  return cohort;
}

CompactParams sample_sparse_truth(const FactorSchema& schema, std::uint64_t seed, const SparseTruthConfig& config) {
  if (config.min_edges < 0 || config.max_edges < config.min_edges) throw InputError("invalid edge count range");
  if (!(config.min_magnitude > 0.0 && config.max_magnitude >= config.min_magnitude)) {
    throw InputError("invalid magnitude range");
  }
  if (!(config.min_rate > 0.0 && config.max_rate >= config.min_rate)) throw InputError("invalid rate range");
  const ModelShape shape = schema.shape();
  const int d = shape.conditions;
  if (config.max_edges > d - 1) throw InputError("more edges requested than parents available");
  Rng rng(derive_seed(seed, "sparse-truth"));
  CompactParams p(shape);
  auto magnitude = [&] { return rng.uniform(config.min_magnitude, config.max_magnitude); };
  for (int child = 0; child < d; ++child) {
    p.values()(shape.index(child, 0, 0)) = rng.uniform(std::log(config.min_rate), std::log(config.max_rate));
    for (int f = 0; f < shape.covariates; ++f) {
      const auto& spec = schema.factors[static_cast<std::size_t>(f)];
      double sign;
      if (spec.name == "diet" || spec.name == "exercise") {
        sign = -1.0;
      } else if (spec.name == "smoking" || spec.name == "drinking") {
        sign = 1.0;
      } else {
        sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      }
      p.values()(shape.index(child, 0, f + 1)) = sign * magnitude();
    }
    p.values()(shape.index(child, 1, 0)) = config.own_state_log_ratio;

    const int edges = config.min_edges + static_cast<int>(rng.below(static_cast<std::uint64_t>(config.max_edges - config.min_edges + 1)));
    std::vector<int> slots(static_cast<std::size_t>(d - 1));
    std::iota(slots.begin(), slots.end(), 0);
    for (int e = 0; e < edges; ++e) {
      const auto pick = e + static_cast<int>(rng.below(static_cast<std::uint64_t>(d - 1 - e)));
      std::swap(slots[static_cast<std::size_t>(e)], slots[static_cast<std::size_t>(pick)]);
      const double sign = rng.bernoulli(0.75) ? 1.0 : -1.0;
      p.values()(shape.index(child, 2 + slots[static_cast<std::size_t>(e)], 0)) = sign * magnitude();
    }
  }
  return p;
}

Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> planted_structure(const CompactParams& truth) {
  const ModelShape& s = truth.shape();
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> a =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(s.conditions, s.conditions, false);
  for (int child = 0; child < s.conditions; ++child) {
    for (int g = 2; g < s.groups(); ++g) {
      if (truth.group(child, g).norm() > 0.0) a(group_parent(child, g), child) = true;
    }
  }
  return a;
}

std::vector<VisitObservation> pooled_observations(const CompactParams& truth, const FactorSchema& schema,
                                                  const FactorDistribution& factors, int periods,
                                                  double exposure_per_cell, std::uint64_t seed, int strata_per_period) {
  if (periods < 0) throw InputError("period count must be non-negative");
  if (strata_per_period < 1) throw InputError("each period needs at least one stratum");
  if (!(exposure_per_cell > 0.0)) throw InputError("cell exposure must be positive");
  factors.validate(schema);
  const ModelShape& s = truth.shape();
  Rng rng(derive_seed(seed, "pooled-observations"));
  std::vector<VisitObservation> out;
  for (int t = 1; t <= periods; ++t) {
    for (int stratum = 0; stratum < strata_per_period; ++stratum) {
      VisitObservation obs;
      obs.time = t;
      obs.z = RiskFactors::from_covariates(factors.sample(schema, rng));
      for (int child = 0; child < s.conditions; ++child) {
        for (int row = 0; row < s.rows(); ++row) {
          const double mean = exposure_per_cell * guarded_exp(truth.log_intensity(obs.z, child, row));
          obs.cells.push_back({child, row, exposure_per_cell, static_cast<double>(rng.poisson(mean))});
        }
      }
      out.push_back(std::move(obs));
    }
  }
  return out;
}

void ScenarioSpec::validate(const FactorSchema& schema) const {
  if (phase1_length < 2) throw InputError("phase I needs at least two observations");
  if (phase2_length < 0) throw InputError("phase II length must be non-negative");
  for (const auto& c : baseline_conditions) schema.condition_index(c);
  std::vector<bool> seen(schema.factors.size(), false);
  for (const auto& [name, value] : baseline_factors) {
    const int f = schema.factor_index(name);
    if (seen[static_cast<std::size_t>(f)]) throw InputError("factor '" + name + "' assigned twice");
    seen[static_cast<std::size_t>(f)] = true;
    schema.factors[static_cast<std::size_t>(f)].parse_level(value);
  }
  for (std::size_t f = 0; f < seen.size(); ++f) {
    if (!seen[f]) throw InputError("baseline value missing for factor '" + schema.factors[f].name + "'");
  }
  for (const auto& c : changes) {
    if (c.observation < 1 || c.observation > total_observations()) {
      throw InputError("change at observation " + std::to_string(c.observation) + " lies outside the horizon");
    }
    schema.factors[static_cast<std::size_t>(schema.factor_index(c.factor))].parse_level(c.value);
  }
}

ConditionProfile ScenarioSpec::initial_profile(const FactorSchema& schema) const {
  std::vector<std::uint8_t> s(schema.conditions.size(), 0);
  for (const auto& c : baseline_conditions) s[static_cast<std::size_t>(schema.condition_index(c))] = 1;
  return ConditionProfile(s);
}

Eigen::VectorXd ScenarioSpec::covariates_at(const FactorSchema& schema, int obs) const {
  Eigen::VectorXd z(static_cast<Index>(schema.factors.size()));
  for (const auto& [name, value] : baseline_factors) {
    const auto f = static_cast<std::size_t>(schema.factor_index(name));
    z(static_cast<Index>(f)) = schema.factors[f].encode(schema.factors[f].parse_level(value));
  }
  // Later entries win when several changes touch the same factor.
  std::vector<FactorChange> ordered = changes;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const FactorChange& a, const FactorChange& b) { return a.observation < b.observation; });
  for (const auto& c : ordered) {
    if (c.observation > obs) break;
    const auto f = static_cast<std::size_t>(schema.factor_index(c.factor));
    z(static_cast<Index>(f)) = schema.factors[f].encode(schema.factors[f].parse_level(c.value));
  }
  return z;
}

Trajectory simulate_scenario_path(const CompactParams& truth, const FactorSchema& schema, const ScenarioSpec& spec) {
  spec.validate(schema);
  if (truth.shape() != schema.shape()) throw DimensionError("truth model does not match the factor schema");
  const int n = spec.total_observations();
  const double dt = spec.step_years();
  const CoefficientTensor tensor = expand(truth);

  Trajectory path;
  path.patient_id = spec.name.empty() ? "scenario" : spec.name;
  Rng rng(derive_seed(spec.seed, "scenario-path"));
  ConditionProfile profile = spec.initial_profile(schema);
  auto z_at = [&](int obs) { return RiskFactors::from_covariates(spec.covariates_at(schema, std::min(obs, n))); };
  path.events.push_back({0.0, profile, z_at(1), EventKind::Visit});
  for (int obs = 1; obs <= n; ++obs) {
    profile = simulate_interval(tensor, z_at(obs), profile, (obs - 1) * dt, obs * dt, rng, path.events);
    path.events.push_back({obs * dt, profile, z_at(obs + 1), EventKind::Visit});
  }
  return path;
}

ScenarioResult run_scenario(const CompactParams& truth, const FactorSchema& schema, const ScenarioSpec& spec) {
  ScenarioResult res;
  res.trajectory = simulate_scenario_path(truth, schema, spec);
  const auto visits = observations_from_trajectory(res.trajectory, schema.shape().conditions);
  res.filter = run_filter(truth, visits, spec.ekf);

  // The initial state is the prior, not an observation; monitoring starts at the first update.
  std::vector<Tensor3> monitored;
  std::vector<double> times;
  for (std::size_t i = 1; i < res.filter.tensors.size(); ++i) {
    monitored.push_back(res.filter.tensors[i].values());
    times.push_back(res.filter.states[i].time);
  }
  auto run = calibrate_and_monitor(monitored, times, spec.phase1_length, spec.chart, spec.mpca);
  res.mpca = std::move(run.mpca);
  res.chart = std::move(run.chart);
  res.phase1_errors = std::move(run.phase1_errors);
  res.series = std::move(run.series);

  if (const auto first = res.series.first_signal()) res.first_signal = spec.phase1_length + static_cast<int>(*first) + 1;
  for (const auto& c : spec.changes) {
    ChangeDetection det{c, std::nullopt, std::nullopt};
    for (std::size_t i = 0; i < res.series.points.size(); ++i) {
      const int obs = spec.phase1_length + static_cast<int>(i) + 1;
      if (obs >= c.observation && res.series.points[i].signal) {
        det.first_signal = obs;
        det.delay = obs - c.observation;
        break;
      }
    }
    res.detections.push_back(det);
  }
  return res;
}

ScenarioSpec standard_scenario(char which, std::uint64_t seed) {
  ScenarioSpec s;
  s.name = std::string("case_") + which;
  s.baseline_conditions = {"diabetes"};
  s.baseline_factors = {{"diet", "healthy"}, {"exercise", "yes"},  {"smoking", "no"},
                        {"drinking", "no"},  {"age_band", "31-35"}, {"gender", "male"},
                        {"education_band", "high-school"}};
  s.seed = seed;
  switch (which) {
    case 'a':
      break;
    case 'b':
      s.changes = {{17, "diet", "unhealthy"}};
      break;
    case 'c':
      s.changes = {{17, "drinking", "yes"}};
      break;
    case 'd':
      s.changes = {{19, "exercise", "no"}, {19, "drinking", "yes"}};
      break;
    case 'e':
      // Yearly cadence: twelve in-control years, then the recorded change.
      s.cadence = Cadence::Years;
      s.phase1_length = 12;
      s.phase2_length = 4;
      s.baseline_conditions = {"obesity", "hyperlipidemia"};
      s.baseline_factors[0].second = "unhealthy";
      s.changes = {{13, "exercise", "no"}, {13, "smoking", "yes"}};
      break;
    default:
      throw InputError(std::string("unknown scenario case '") + which + "'");
  }
  return s;
}

}  // namespace dfctbn
