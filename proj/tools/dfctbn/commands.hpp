#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dfctbn/chart.hpp"
#include "dfctbn/ekf.hpp"
#include "dfctbn/mpca.hpp"

namespace dfctbn::cli {

struct GlobalOptions {
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  int verbosity = 0;
};

struct FitOptions {
  std::string visits;
  std::string output;
  std::optional<double> lambda;
  std::string cv_grid;
  std::string cv_output;
  int folds = 5;
  double edge_threshold = 1e-6;
  int max_iter = 500;
  int prox_max_iter = 20000;
  double tol = 1e-8;
  bool pass_through = false;
};

struct TrackOptions {
  std::string model;
  std::string visits;
  std::string patient;
  std::string output;
  std::string diagnostics;
  /// Model the diagnostics measure each state against, e.g. a simulation truth.
  std::string reference;
  EkfConfig ekf;
};

struct MonitorOptions {
  std::string model;
  std::string tensors;
  std::string visits;
  std::string patient;
  std::string output;
  std::string svg;
  int phase1 = 12;
  bool include_initial = false;
  ChartConfig chart;
  std::string mode = "ewma";
  MpcaConfig mpca;
  EkfConfig ekf;
};

struct SimulateOptions {
  std::string truth;
  std::string scenario;
  std::string output;
  int patients = 0;
  int visits = 3;
  double interval = 1.0;
  double prevalence = 0.25;
};

struct PredictOptions {
  std::string model;
  std::string profile;
  std::string factors;
  double horizon = 1.0;
  int steps = 1;
};

// Each returns the process exit code; library exceptions propagate.
int run_fit(const GlobalOptions& g, const FitOptions& o);
int run_track(const GlobalOptions& g, const TrackOptions& o);
int run_monitor(const GlobalOptions& g, const MonitorOptions& o);
int run_simulate(const GlobalOptions& g, const SimulateOptions& o);
int run_predict(const GlobalOptions& g, const PredictOptions& o);

}  // namespace dfctbn::cli
