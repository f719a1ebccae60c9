#include <benchmark/benchmark.h>

#include <sstream>

#include "dfctbn/chart.hpp"
#include "dfctbn/cohort.hpp"
#include "dfctbn/ekf.hpp"
#include "dfctbn/io.hpp"
#include "dfctbn/learn.hpp"
#include "dfctbn/mpca.hpp"

using namespace dfctbn;

namespace {

const FactorSchema& schema() {
  static const FactorSchema s = FactorSchema::standard();
  return s;
}

const CompactParams& truth() {
  static const CompactParams t = sample_sparse_truth(schema(), 2024);
  return t;
}

std::vector<Trajectory> cohort(int patients, int visits) {
  CohortConfig cc;
  cc.patients = patients;
  cc.schedule = {1.0, visits};
  cc.factors = FactorDistribution::uniform(schema());
  cc.seed = 7;
  return generate_cohort(truth(), schema(), cc);
}

void BM_LogLikelihood(benchmark::State& state) {
  const auto strata = stratify(cohort(static_cast<int>(state.range(0)), 5), schema().shape().conditions);
  for (auto _ : state) benchmark::DoNotOptimize(log_likelihood(truth(), strata));
  state.counters["strata"] = static_cast<double>(strata.size());
}
BENCHMARK(BM_LogLikelihood)->Arg(100)->Arg(400);

void BM_GenerateCohort(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(cohort(static_cast<int>(state.range(0)), 11));
}
BENCHMARK(BM_GenerateCohort)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_GroupLassoFit(benchmark::State& state) {
  const auto data = cohort(400, 11);
  FitConfig fc;
  fc.lambda = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(fit_group_lasso(schema().shape(), data, fc));
}
BENCHMARK(BM_GroupLassoFit)->Unit(benchmark::kMillisecond);

void BM_EkfUpdate(benchmark::State& state) {
  EkfConfig cfg;
  cfg.track_all = state.range(0) != 0;
  const auto coords = cfg.track_all ? TrackedCoordinates(truth()) : TrackedCoordinates::surviving(truth(), cfg.edge_threshold);
  const auto obs = pooled_observations(truth(), schema(), FactorDistribution::uniform(schema()), 1, 100.0, 3);
  const auto prior = initial_state(coords, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(update_step(prior, coords, obs.front()));
  state.counters["state"] = static_cast<double>(coords.size());
}
BENCHMARK(BM_EkfUpdate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

std::vector<Tensor3> perturbed_tensors(int n) {
  const Tensor3 base = expand(truth()).values();
  Rng rng(5);
  std::vector<Tensor3> out;
  for (int i = 0; i < n; ++i) {
    Tensor3 t = base;
    for (Index j = 0; j < t.flat().size(); ++j) t.flat()(j) += 0.01 * rng.normal();
    out.push_back(std::move(t));
  }
  return out;
}

void BM_MpcaFit(benchmark::State& state) {
  const auto samples = perturbed_tensors(12);
  for (auto _ : state) benchmark::DoNotOptimize(mpca_fit(samples));
}
BENCHMARK(BM_MpcaFit)->Unit(benchmark::kMillisecond);

void BM_ChartUpdate(benchmark::State& state) {
  const auto samples = perturbed_tensors(12);
  const auto model = mpca_fit(samples);
  std::vector<double> phase1;
  for (const auto& t : samples) phase1.push_back(reconstruction_error(model, t).norm);
  const ChartState calibrated = chart_calibrate(phase1);
  for (auto _ : state) {
    ChartState chart = calibrated;
    benchmark::DoNotOptimize(chart_update(chart, reconstruction_error(model, samples.front()).norm));
  }
}
BENCHMARK(BM_ChartUpdate);

void BM_ParseVisits(benchmark::State& state) {
  std::ostringstream out;
  write_visits(cohort(400, 3), schema(), out);
  const std::string text = out.str();
  for (auto _ : state) {
    std::istringstream in(text);
    benchmark::DoNotOptimize(parse_visits(in, VisitFileSchema{}));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ParseVisits)->Unit(benchmark::kMillisecond);

}  // namespace

// The packaged benchmark_main archive carries LTO bytecode from another compiler release.
BENCHMARK_MAIN();
