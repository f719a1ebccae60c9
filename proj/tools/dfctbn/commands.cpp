#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dfctbn/cohort.hpp"
#include "dfctbn/error.hpp"
#include "dfctbn/io.hpp"
#include "dfctbn/learn.hpp"

namespace dfctbn::cli {
namespace {

void note(const GlobalOptions& g, const std::string& msg) {
  if (g.verbosity > 0) std::cerr << msg << '\n';
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  for (const auto& item : split_list(text, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw InputError("bad lambda value '" + item + "' in --cv");
    grid.push_back(v);
  }
  if (grid.empty()) throw InputError("--cv needs at least one lambda");
  return grid;
}

const Trajectory& select_patient(const std::vector<Trajectory>& data, const std::string& id, const std::string& file) {
  if (id.empty()) {
    if (data.size() == 1) return data.front();
    throw InputError(file + " holds " + std::to_string(data.size()) + " patients; choose one with --patient");
  }
  for (const auto& t : data) {
    if (t.patient_id == id) return t;
  }
  throw InputError("patient '" + id + "' not found in " + file);
}

VisitFileSchema visit_schema(const FactorSchema& schema) {
  VisitFileSchema v;
  v.factors = schema;
  return v;
}

FilterRun track_patient(const ModelFile& model, const std::string& visits_path, const std::string& patient,
                        EkfConfig ekf) {
  const auto data = parse_visits(visits_path, visit_schema(model.metadata.schema));
  const auto& traj = select_patient(data, patient, visits_path);
  ekf.edge_threshold = model.metadata.edge_threshold;
  return run_filter(model.params, observations_from_trajectory(traj, model.params.shape().conditions), ekf);
}

}  // namespace

int run_fit(const GlobalOptions& g, const FitOptions& o) {
  const auto schema = FactorSchema::standard();
  VisitFileSchema vs;
  vs.pass_through_unknown = o.pass_through;
  ParseReport rep;
  const auto data = parse_visits(o.visits, vs, &rep);
  note(g, "read " + std::to_string(rep.rows) + " rows, " + std::to_string(rep.patients) + " patients, " +
              std::to_string(rep.dropped) + " dropped");
  if (data.empty()) throw DataError(o.visits + " holds no usable visits");

  FitConfig cfg;
  cfg.cv_folds = o.folds;
  cfg.edge_threshold = o.edge_threshold;
  cfg.max_iter = o.max_iter;
  cfg.prox_max_iter = o.prox_max_iter;
  cfg.tol = o.tol;
  cfg.threads = g.threads;
  cfg.seed = g.seed;
  std::string provenance = "fixed";
  if (!o.cv_grid.empty()) {
    const auto grid = parse_grid(o.cv_grid);
    const auto cv = cross_validate(schema.shape(), data, grid, cfg);
    std::cout << "lambda,mean_nll,se_nll\n";
    for (const auto& p : cv.curve) {
      std::cout << format_double(p.lambda) << ',' << format_double(p.mean_nll) << ',' << format_double(p.se_nll) << '\n';
    }
    std::cout << "best_lambda " << format_double(cv.best_lambda) << '\n';
    for (const auto& w : cv.warnings) std::cerr << "warning: " << w << '\n';
    if (!o.cv_output.empty()) {
      std::ofstream f(o.cv_output);
      if (!f) throw InputError("cannot open '" + o.cv_output + "' for writing");
      f << "lambda,mean_nll,se_nll\n";
      for (const auto& p : cv.curve) {
        f << format_double(p.lambda) << ',' << format_double(p.mean_nll) << ',' << format_double(p.se_nll) << '\n';
      }
    }
    cfg.lambda = cv.best_lambda;
    provenance = "cv";
  } else {
    cfg.lambda = o.lambda.value_or(0.0);
  }
  cfg.validate();

  const auto fit = fit_group_lasso(schema.shape(), data, cfg);
  ModelFile mf{fit.params, extract_structure(fit.params, cfg.edge_threshold), {}};
  mf.metadata.schema = schema;
  mf.metadata.lambda = cfg.lambda;
  mf.metadata.edge_threshold = cfg.edge_threshold;
  mf.metadata.note = provenance;
  write_model(mf, o.output);

  std::cout << "edges";
  int edges = 0;
  for (int p = 0; p < mf.structure.rows(); ++p) {
    for (int c = 0; c < mf.structure.cols(); ++c) {
      if (mf.structure(p, c)) {
        std::cout << ' ' << schema.conditions[static_cast<std::size_t>(p)] << "->" << schema.conditions[static_cast<std::size_t>(c)];
        ++edges;
      }
    }
  }
  std::cout << (edges ? "" : " none") << '\n';
  note(g, "wrote " + o.output);
  return 0;
}

int run_track(const GlobalOptions& g, const TrackOptions& o) {
  const auto model = read_model(o.model);
  const auto run = track_patient(model, o.visits, o.patient, o.ekf);

  std::vector<Tensor3> tensors;
  std::vector<double> times;
  for (std::size_t i = 0; i < run.tensors.size(); ++i) {
    tensors.push_back(run.tensors[i].values());
    times.push_back(run.states[i].time);
  }
  write_tensors(tensors, times, o.output);

  const auto report = stability_report(run.states);
  const Eigen::VectorXd& initial = run.states.front().mean;
  std::optional<Eigen::VectorXd> reference;
  if (!o.reference.empty()) {
    const auto ref = read_model(o.reference);
    if (ref.params.shape() != model.params.shape()) throw DimensionError("reference model has a different shape");
    reference = run.coords.restrict(ref.params.values());
  }
  std::ostringstream diag;
  diag << "index,time,mse_vs_initial," << (reference ? "mse_vs_reference," : "") << "trace_cov,innovation_norm\n";
  for (std::size_t i = 0; i < run.states.size(); ++i) {
    const auto& s = run.states[i];
    diag << i << ',' << format_double(s.time) << ',' << format_double(coefficient_mse(s.mean, initial)) << ',';
    if (reference) diag << format_double(coefficient_mse(s.mean, *reference)) << ',';
    diag << format_double(s.cov.trace()) << ','
         << format_double(s.last_update ? s.last_update->innovation_norm : 0.0) << '\n';
  }
  if (!o.diagnostics.empty()) {
    std::ofstream f(o.diagnostics);
    if (!f) throw InputError("cannot open '" + o.diagnostics + "' for writing");
    f << diag.str();
  }
  std::cout << "states " << run.states.size() << " tracked " << run.coords.size() << '\n';
  std::cout << "stability " << (report.all_pass() ? "pass" : "fail") << " sup_F " << format_double(report.sup_transition_norm)
            << " sup_H " << format_double(report.sup_jacobian_norm) << " max_error " << format_double(report.max_error)
            << '\n';
  note(g, "wrote " + o.output);
  return 0;
}

int run_monitor(const GlobalOptions& g, const MonitorOptions& o) {
  std::vector<Tensor3> tensors;
  std::vector<double> times;
  if (!o.tensors.empty()) {
    auto series = read_tensors(o.tensors);
    tensors = std::move(series.tensors);
    times = std::move(series.times);
  } else {
    if (o.model.empty() || o.visits.empty()) throw InputError("monitor needs --tensors, or --model with --visits");
    const auto run = track_patient(read_model(o.model), o.visits, o.patient, o.ekf);
    for (std::size_t i = 0; i < run.tensors.size(); ++i) {
      tensors.push_back(run.tensors[i].values());
      times.push_back(run.states[i].time);
    }
  }
  // Step 0 of a tracked series is the prior, not an observation.
  if (!o.include_initial && !tensors.empty()) {
    tensors.erase(tensors.begin());
    times.erase(times.begin());
  }
  if (o.phase1 < 2 || static_cast<std::size_t>(o.phase1) > tensors.size()) {
    std::cerr << "error: phase I length " << o.phase1 << " needs at least 2 and at most " << tensors.size()
              << " monitored tensors\n";
    return 3;
  }
  ChartConfig chart = o.chart;
  if (o.mode == "ewma") chart.mode = ChartMode::Ewma;
  else if (o.mode == "mewma") chart.mode = ChartMode::Mewma;
  else throw InputError("--mode must be ewma or mewma");

  const auto run = calibrate_and_monitor(tensors, times, o.phase1, chart, o.mpca);
  for (const auto& w : run.chart.warnings) std::cerr << "warning: " << w << '\n';
  write_chart_series(run.series, o.output);
  if (!o.svg.empty()) write_chart_svg(run.series, o.svg);

  std::cout << "phase1 " << o.phase1 << " phase2 " << run.series.points.size() << " mpca_dims " << run.mpca.dims[0]
            << ',' << run.mpca.dims[1] << ',' << run.mpca.dims[2] << '\n';
  std::cout << "signals " << run.series.signal_count();
  if (const auto first = run.series.first_signal()) {
    const auto& p = run.series.points[*first];
    std::cout << " first_signal_observation " << o.phase1 + static_cast<int>(*first) + 1 << " time "
              << format_double(p.time);
  }
  std::cout << '\n';
  note(g, "wrote " + o.output);
  return 0;
}

int run_simulate(const GlobalOptions& g, const SimulateOptions& o) {
  const auto truth = read_model(o.truth);
  const auto& schema = truth.metadata.schema;
  std::vector<Trajectory> out;
  if (!o.scenario.empty()) {
    if (o.patients != 0) throw InputError("--scenario and --patients are exclusive");
    auto spec = parse_scenario(o.scenario);
    if (g.seed_given) spec.seed = g.seed;
    out.push_back(simulate_scenario_path(truth.params, schema, spec));
  } else {
    if (o.patients <= 0) throw InputError("simulate needs --scenario or --patients > 0");
    CohortConfig c;
    c.patients = o.patients;
    c.schedule = {o.interval, o.visits};
    c.factors = FactorDistribution::uniform(schema);
    c.initial_prevalence = o.prevalence;
    c.seed = g.seed;
    c.threads = g.threads;
    out = generate_cohort(truth.params, schema, c);
  }
  write_visits(out, schema, o.output);
  std::size_t rows = 0;
  for (const auto& t : out) rows += t.events.size();
  std::cout << "patients " << out.size() << " rows " << rows << '\n';
  note(g, "wrote " + o.output);
  return 0;
}

int run_predict(const GlobalOptions& g, const PredictOptions& o) {
  const auto model = read_model(o.model);
  const auto& schema = model.metadata.schema;
  const int d = static_cast<int>(schema.conditions.size());
  std::vector<std::uint8_t> states(static_cast<std::size_t>(d), 0);
  for (const auto& name : split_list(o.profile, ',')) states[static_cast<std::size_t>(schema.condition_index(name))] = 1;

  Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Index>(schema.factors.size()));
  std::vector<bool> given(schema.factors.size(), false);
  for (const auto& item : split_list(o.factors, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InputError("factor '" + item + "' must be name=value");
    const int f = schema.factor_index(item.substr(0, eq));
    const auto& spec = schema.factors[static_cast<std::size_t>(f)];
    z(f) = spec.encode(spec.parse_level(item.substr(eq + 1)));
    given[static_cast<std::size_t>(f)] = true;
  }
  for (std::size_t f = 0; f < given.size(); ++f) {
    if (!given[f]) note(g, "factor " + schema.factors[f].name + " not given; using level " + schema.factors[f].labels[0]);
  }
  if (!(o.horizon >= 0.0)) throw InputError("--horizon must be non-negative");
  if (o.steps < 1) throw InputError("--steps must be positive");

  const auto tensor = expand(model.params);
  const auto rf = RiskFactors::from_covariates(z);
  const ConditionProfile profile(states);
  std::cout << "condition,status";
  for (int s = 1; s <= o.steps; ++s) std::cout << ",p@" << format_double(o.horizon * s / o.steps);
  std::cout << '\n';
  for (int i = 0; i < d; ++i) {
    std::cout << schema.conditions[static_cast<std::size_t>(i)] << ',' << (states[static_cast<std::size_t>(i)] ? "active" : "inactive");
    for (int s = 1; s <= o.steps; ++s) {
      if (states[static_cast<std::size_t>(i)]) {
        std::cout << ",NA";
      } else {
        std::cout << ',' << format_double(emergence_probability(tensor, rf, profile, i, o.horizon * s / o.steps));
      }
    }
    std::cout << '\n';
  }
  return 0;
}

}  // namespace dfctbn::cli
