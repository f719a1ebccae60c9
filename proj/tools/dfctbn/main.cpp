#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "dfctbn/error.hpp"
#include "dfctbn/version.hpp"

// Exit codes: 0 success, 2 bad input (files, flags, data), 3 numerical failure.
int main(int argc, char** argv) {
  using namespace dfctbn::cli;
  CLI::App app{"Dynamic functional CTBN toolkit: fit, track, monitor, simulate and predict multimorbidity models."};
  app.set_version_flag("--version", std::string(dfctbn::kVersion));
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
  app.require_subcommand(1);

  GlobalOptions g;
  auto* seed = app.add_option("--seed", g.seed, "Seed for every random stream")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_flag("-v,--verbose", g.verbosity, "Progress messages on stderr (repeatable)");

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the adaptive group lasso to a visit file");
  fit_cmd->add_option("visits", fit.visits, "Visit CSV")->required();
  fit_cmd->add_option("-o,--output", fit.output, "Model file to write")->required();
  auto* lambda = fit_cmd->add_option("--lambda", fit.lambda, "Fixed penalty weight (default 0, the MLE)");
  fit_cmd->add_option("--cv", fit.cv_grid, "Comma-separated lambda grid chosen by cross-validation")->excludes(lambda);
  fit_cmd->add_option("--cv-output", fit.cv_output, "CSV for the cross-validation curve");
  fit_cmd->add_option("--folds", fit.folds, "Cross-validation folds")->capture_default_str();
  fit_cmd->add_option("--edge-threshold", fit.edge_threshold, "Group norm above which an edge exists")->capture_default_str();
  fit_cmd->add_option("--max-iter", fit.max_iter, "Newton iterations")->capture_default_str();
  fit_cmd->add_option("--prox-max-iter", fit.prox_max_iter, "Proximal-gradient iterations")->capture_default_str();
  fit_cmd->add_option("--tol", fit.tol, "Relative objective change for convergence")->capture_default_str();
  fit_cmd->add_flag("--pass-through", fit.pass_through, "Ignore visit columns outside the schema");

  TrackOptions track;
  auto* track_cmd = app.add_subcommand("track", "Run the extended Kalman filter over one patient's visits");
  track_cmd->add_option("model", track.model, "Model file")->required();
  track_cmd->add_option("visits", track.visits, "Visit CSV")->required();
  track_cmd->add_option("--patient", track.patient, "Patient id (optional when the file holds one patient)");
  track_cmd->add_option("-o,--output", track.output, "Tensor CSV to write")->required();
  track_cmd->add_option("--diagnostics", track.diagnostics, "CSV of per-state MSE vs the initial model and trace(P)");
  track_cmd->add_option("--reference", track.reference, "Model to measure each state against (adds mse_vs_reference)");
  track_cmd->add_option("--process-noise", track.ekf.process_noise, "sigma^2 of Q = sigma^2 I")->capture_default_str();
  track_cmd->add_option("--initial-variance", track.ekf.initial_variance, "Diagonal of P0")->capture_default_str();
  track_cmd->add_flag("--track-all", track.ekf.track_all, "Track every coefficient, not only surviving groups");

  MonitorOptions mon;
  auto* mon_cmd = app.add_subcommand("monitor", "Calibrate a control chart on phase I and monitor the rest");
  auto* tensors = mon_cmd->add_option("--tensors", mon.tensors, "Tensor CSV written by `track`");
  auto* visits = mon_cmd->add_option("--visits", mon.visits, "Visit CSV; tracked with --model first")->excludes(tensors);
  mon_cmd->add_option("--model", mon.model, "Model file (with --visits)");
  mon_cmd->add_option("--patient", mon.patient, "Patient id (with --visits)");
  mon_cmd->add_option("-o,--output", mon.output, "Chart CSV to write")->required();
  mon_cmd->add_option("--svg", mon.svg, "Companion SVG plot");
  mon_cmd->add_option("--phase1", mon.phase1, "Phase-I length in observations")->capture_default_str();
  mon_cmd->add_option("--lambda-ewma", mon.chart.lambda, "EWMA smoothing constant")->capture_default_str();
  mon_cmd->add_option("--L", mon.chart.width, "Control-limit width in standard deviations")->capture_default_str();
  mon_cmd->add_option("--mode", mon.mode, "ewma or mewma")->capture_default_str();
  mon_cmd->add_flag("--upper-only", mon.chart.upper_only, "Signal only above the upper limit");
  mon_cmd->add_option("--mpca-energy", mon.mpca.energy_fraction, "Scatter fraction that fixes the MPCA dims")
      ->capture_default_str();
  mon_cmd->add_flag("--include-initial", mon.include_initial, "Monitor step 0 of the tensor series as well");
  mon_cmd->add_option("--process-noise", mon.ekf.process_noise, "EKF process noise (with --visits)")->capture_default_str();
  mon_cmd->add_option("--initial-variance", mon.ekf.initial_variance, "EKF initial variance (with --visits)")
      ->capture_default_str();
  (void)visits;

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a scenario patient or a cohort from a truth model");
  sim_cmd->add_option("truth", sim.truth, "Truth model file")->required();
  auto* scen = sim_cmd->add_option("--scenario", sim.scenario, "Scenario config; --seed overrides its seed");
  sim_cmd->add_option("--patients", sim.patients, "Cohort size")->excludes(scen);
  sim_cmd->add_option("--visits", sim.visits, "Visits per patient")->capture_default_str();
  sim_cmd->add_option("--interval", sim.interval, "Years between visits")->capture_default_str();
  sim_cmd->add_option("--prevalence", sim.prevalence, "Chance each condition is active at entry")->capture_default_str();
  sim_cmd->add_option("-o,--output", sim.output, "Visit CSV to write")->required();

  PredictOptions pred;
  auto* pred_cmd = app.add_subcommand("predict", "Probability of each inactive condition emerging within a horizon");
  pred_cmd->add_option("model", pred.model, "Model file")->required();
  pred_cmd->add_option("--profile", pred.profile, "Comma-separated active conditions");
  pred_cmd->add_option("--factors", pred.factors, "name=value pairs, comma-separated; missing factors use level 0");
  pred_cmd->add_option("--horizon", pred.horizon, "Years")->capture_default_str();
  pred_cmd->add_option("--steps", pred.steps, "Report at horizon*j/steps for j = 1..steps")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  g.seed_given = seed->count() > 0;

  try {
    if (*fit_cmd) return run_fit(g, fit);
    if (*track_cmd) return run_track(g, track);
    if (*mon_cmd) return run_monitor(g, mon);
    if (*sim_cmd) return run_simulate(g, sim);
    if (*pred_cmd) return run_predict(g, pred);
  } catch (const dfctbn::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const dfctbn::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
