#include "dfctbn/chart.hpp"

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "dfctbn/error.hpp"

namespace dfctbn {
namespace {

void validate(const ChartConfig& config) {
  if (!(config.lambda > 0.0 && config.lambda <= 1.0)) throw InputError("chart smoothing must lie in (0, 1]");
  if (!(config.width > 0.0) || !std::isfinite(config.width)) throw InputError("chart width must be positive");
}

void warn_short(ChartState& state, std::size_t n) {
  if (n < kRecommendedPhaseOne) {
    state.warnings.push_back("phase I has " + std::to_string(n) + " samples; at least " +
                             std::to_string(kRecommendedPhaseOne) + " are recommended");
  }
}

}  // namespace

double ewma_variance_factor(double lambda, std::size_t i) {
  return lambda / (2.0 - lambda) * (1.0 - std::pow(1.0 - lambda, 2.0 * static_cast<double>(i)));
}

ChartLimits chart_limits(const ChartState& state, std::size_t i) {
  if (state.config.mode == ChartMode::Mewma) return {state.t2_limit, 0.0, 0.0};
  const double mu = state.mu0(0);
  const double half = state.config.width * state.sigma * std::sqrt(ewma_variance_factor(state.config.lambda, i));
  return {mu + half, mu, mu - half};
}

ChartLimits asymptotic_limits(const ChartState& state) {
  if (state.config.mode == ChartMode::Mewma) return {state.t2_limit, 0.0, 0.0};
  const double lambda = state.config.lambda;
  const double mu = state.mu0(0);
  const double half = state.config.width * state.sigma * std::sqrt(lambda / (2.0 - lambda));
  return {mu + half, mu, mu - half};
}

ChartState chart_calibrate(const std::vector<double>& phase1, const ChartConfig& config) {
  std::vector<Eigen::VectorXd> v;
  v.reserve(phase1.size());
  for (double x : phase1) v.push_back(Eigen::VectorXd::Constant(1, x));
  ChartConfig c = config;
  c.mode = ChartMode::Ewma;
  return chart_calibrate(v, c);
}

ChartState chart_calibrate(const std::vector<Eigen::VectorXd>& phase1, const ChartConfig& config) {
  validate(config);
  if (phase1.size() < 2) throw InputError("phase I needs at least two samples");
  const Eigen::Index p = phase1.front().size();
  if (p == 0) throw DimensionError("phase I features are empty");
  for (const auto& x : phase1) {
    if (x.size() != p) throw DimensionError("phase I feature lengths differ");
    if (!x.allFinite()) throw DataError("phase I contains non-finite values");
  }
  if (config.mode == ChartMode::Ewma && p != 1) throw DimensionError("univariate chart needs scalar features");

  ChartState state;
  state.config = config;
  warn_short(state, phase1.size());
  const double n = static_cast<double>(phase1.size());
  state.mu0 = Eigen::VectorXd::Zero(p);
  for (const auto& x : phase1) state.mu0 += x;
  state.mu0 /= n;
  state.covariance = Eigen::MatrixXd::Zero(p, p);
  for (const auto& x : phase1) {
    const Eigen::VectorXd d = x - state.mu0;
    state.covariance.noalias() += d * d.transpose();
  }
  state.covariance /= (n - 1.0);

  if (config.mode == ChartMode::Ewma) {
    state.sigma = std::sqrt(state.covariance(0, 0));
    if (!(state.sigma > 0.0)) throw NumericalError("zero phase-I variance");
    state.z = state.mu0;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(state.covariance);
    const double top = es.eigenvalues().maxCoeff();
    if (!(top > 0.0) || es.eigenvalues().minCoeff() <= 1e-12 * top) {
      throw NumericalError("phase-I covariance is singular");
    }
    state.covariance_inverse = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                               es.eigenvectors().transpose();
    const double coverage = 2.0 * boost::math::cdf(boost::math::normal(), config.width) - 1.0;
    state.t2_limit = boost::math::quantile(boost::math::chi_squared(static_cast<double>(p)), coverage);
    state.z = Eigen::VectorXd::Zero(p);
  }
  return state;
}

ChartPoint chart_update(ChartState& state, const Eigen::VectorXd& x) {
  if (x.size() != static_cast<Eigen::Index>(state.features())) {
    throw DimensionError("chart feature length " + std::to_string(x.size()) + " does not match calibration " +
                         std::to_string(state.features()));
  }
  const double lambda = state.config.lambda;
  ++state.index;
  ChartPoint pt;
  pt.index = state.index;
  pt.time = static_cast<double>(state.index);
  const ChartLimits lim = chart_limits(state, state.index);
  pt.ucl = lim.ucl;
  pt.lcl = lim.lcl;
  if (state.config.mode == ChartMode::Ewma) {
    state.z(0) = lambda * x(0) + (1.0 - lambda) * state.z(0);
    pt.statistic = state.z(0);
    pt.signal = pt.statistic > pt.ucl || (!state.config.upper_only && pt.statistic < pt.lcl);
  } else {
    state.z = lambda * (x - state.mu0) + (1.0 - lambda) * state.z;
    const double f = ewma_variance_factor(lambda, state.index);
    pt.statistic = state.z.dot(state.covariance_inverse * state.z) / f;
    pt.signal = pt.statistic > pt.ucl;
  }
  return pt;
}

ChartPoint chart_update(ChartState& state, double x) { return chart_update(state, Eigen::VectorXd::Constant(1, x)); }

std::vector<double> ewma_series(const std::vector<double>& xs, double lambda, double z0) {
  std::vector<double> out;
  out.reserve(xs.size());
  double z = z0;
  for (double x : xs) {
    z = lambda * x + (1.0 - lambda) * z;
    out.push_back(z);
  }
  return out;
}

Eigen::VectorXd residual_features(const MpcaModel& model, const Tensor3& tensor, ChartMode mode) {
  const Reconstruction r = reconstruction_error(model, tensor);
  if (mode == ChartMode::Ewma) return Eigen::VectorXd::Constant(1, r.norm);
  const auto& e = r.residual;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(e.dim(1));
  for (Eigen::Index i = 0; i < e.dim(0); ++i) {
    for (Eigen::Index j = 0; j < e.dim(1); ++j) {
      for (Eigen::Index k = 0; k < e.dim(2); ++k) f(j) += e(i, j, k) * e(i, j, k);
    }
  }
  return f.cwiseSqrt();
}

std::optional<std::size_t> ChartSeries::first_signal() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].signal) return i;
  }
  return std::nullopt;
}

std::size_t ChartSeries::signal_count() const {
  std::size_t n = 0;
  for (const auto& p : points) n += p.signal ? 1 : 0;
  return n;
}

ChartSeries monitor_stream(const MpcaModel& model, ChartState chart, const std::vector<Tensor3>& tensors,
                           const std::vector<double>& times) {
  if (!times.empty() && times.size() != tensors.size()) {
    throw DimensionError("monitor times and tensors differ in length");
  }
  ChartSeries series;
  series.points.reserve(tensors.size());
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    ChartPoint p = chart_update(chart, residual_features(model, tensors[t], chart.config.mode));
    if (!times.empty()) p.time = times[t];
    series.points.push_back(p);
  }
  return series;
}

ChartSeries monitor_stream(const MpcaModel& model, ChartState chart, const std::vector<CoefficientTensor>& tensors,
                           const std::vector<double>& times) {
  std::vector<Tensor3> raw;
  raw.reserve(tensors.size());
  for (const auto& t : tensors) raw.push_back(t.values());
  return monitor_stream(model, std::move(chart), raw, times);
}

MonitorRun calibrate_and_monitor(const std::vector<Tensor3>& tensors, const std::vector<double>& times, int phase1,
                                 const ChartConfig& chart, const MpcaConfig& mpca) {
  if (phase1 < 2 || static_cast<std::size_t>(phase1) > tensors.size()) {
    throw DimensionError("phase I needs between 2 and " + std::to_string(tensors.size()) + " tensors, got " +
                         std::to_string(phase1));
  }
  if (!times.empty() && times.size() != tensors.size()) throw DimensionError("monitor times and tensors differ in length");
  const auto p1 = static_cast<std::ptrdiff_t>(phase1);
  const std::vector<Tensor3> first(tensors.begin(), tensors.begin() + p1);
  MonitorRun run;
  run.mpca = mpca_fit(first, mpca);
  std::vector<Eigen::VectorXd> features;
  for (const auto& t : first) {
    features.push_back(residual_features(run.mpca, t, chart.mode));
    run.phase1_errors.push_back(reconstruction_error(run.mpca, t).norm);
  }
  run.chart = chart_calibrate(features, chart);
  const std::vector<Tensor3> rest(tensors.begin() + p1, tensors.end());
  run.series = monitor_stream(run.mpca, run.chart, rest,
                              times.empty() ? std::vector<double>{} : std::vector<double>(times.begin() + p1, times.end()));
  return run;
}

}  // namespace dfctbn
