#include "dfctbn/ekf.hpp"

#include <algorithm>
#include <cmath>

#include "dfctbn/error.hpp"

namespace dfctbn {
namespace {

void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

double spectral_norm(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

double condition_number(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 1.0;
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

}  // namespace

void VisitObservation::validate(const ModelShape& shape) const {
  if (z.size() != shape.coefficients()) throw DimensionError("visit risk factors do not match the model");
  if (!std::isfinite(time)) throw DataError("visit time is not finite");
  for (const auto& c : cells) {
    if (c.child < 0 || c.child >= shape.conditions || c.row < 0 || c.row >= shape.rows()) {
      throw DimensionError("observation cell index out of range");
    }
    if (!(c.exposure >= 0.0) || !std::isfinite(c.exposure)) throw DataError("observation exposure must be non-negative");
    if (!(c.count >= 0.0) || c.count != std::floor(c.count)) throw DataError("observation counts must be non-negative integers");
    if (c.count > 0.0 && c.exposure == 0.0) throw DataError("observation count without exposure");
  }
}

std::vector<VisitObservation> observations_from_trajectory(const Trajectory& trajectory, int conditions) {
  trajectory.validate();
  std::vector<VisitObservation> out;
  if (trajectory.events.empty()) return out;
  SufficientStats acc(conditions);
  RiskFactors z = trajectory.events.front().z;
  std::vector<int> flipped;
  for (std::size_t k = 0; k + 1 < trajectory.events.size(); ++k) {
    const auto& cur = trajectory.events[k];
    const auto& next = trajectory.events[k + 1];
    if (cur.kind == EventKind::Visit) z = cur.z;
    flipped.clear();
    for (int i = 0; i < conditions; ++i) {
      if (next.profile[i] != cur.profile[i]) flipped.push_back(i);
    }
    acc.add_interval(cur.profile, next.time - cur.time, flipped);
    if (next.kind != EventKind::Visit) continue;
    VisitObservation obs{next.time, z, {}};
    for (int i = 0; i < conditions; ++i) {
      for (int r = 0; r < acc.rows(); ++r) {
        if (acc.exposure()(r, i) > 0.0) obs.cells.push_back({i, r, acc.exposure()(r, i), acc.counts()(r, i)});
      }
    }
    out.push_back(std::move(obs));
    acc = SufficientStats(conditions);
  }
  return out;
}

// ---------------------------------------------------------------------------

TrackedCoordinates::TrackedCoordinates(const CompactParams& base) : base_(base) {
  tracked_.resize(static_cast<std::size_t>(base.values().size()));
  for (Index i = 0; i < base.values().size(); ++i) tracked_[static_cast<std::size_t>(i)] = i;
}

TrackedCoordinates::TrackedCoordinates(const CompactParams& base, std::vector<Index> tracked)
    : base_(base), tracked_(std::move(tracked)) {
  if (!std::is_sorted(tracked_.begin(), tracked_.end()) ||
      std::adjacent_find(tracked_.begin(), tracked_.end()) != tracked_.end()) {
    throw InputError("tracked coordinates must be strictly increasing");
  }
  if (!tracked_.empty() && (tracked_.front() < 0 || tracked_.back() >= base.values().size())) {
    throw DimensionError("tracked coordinate out of range");
  }
}

TrackedCoordinates TrackedCoordinates::surviving(const CompactParams& base, double edge_threshold) {
  const ModelShape& s = base.shape();
  std::vector<Index> idx;
  for (int i = 0; i < s.conditions; ++i) {
    for (int g = 0; g < s.groups(); ++g) {
      if (g != 0 && !(base.group(i, g).norm() > edge_threshold)) continue;
      for (int c = 0; c < s.coefficients(); ++c) idx.push_back(s.index(i, g, c));
    }
  }
  return {base, std::move(idx)};
}

Eigen::VectorXd TrackedCoordinates::restrict(const Eigen::VectorXd& compact) const {
  Eigen::VectorXd out(size());
  for (Index j = 0; j < size(); ++j) out(j) = compact(tracked_[static_cast<std::size_t>(j)]);
  return out;
}

CompactParams TrackedCoordinates::embed(const Eigen::VectorXd& state) const {
  if (state.size() != size()) throw DimensionError("state length does not match the tracked coordinates");
  CompactParams out = base_;
  for (Index j = 0; j < size(); ++j) out.values()(tracked_[static_cast<std::size_t>(j)]) = state(j);
  return out;
}

// ---------------------------------------------------------------------------

ObservationModel observation_model(const TrackedCoordinates& coords, const Eigen::VectorXd& state,
                                   const std::vector<const VisitObservation*>& visits) {
  const CompactParams params = coords.embed(state);
  const ModelShape& shape = params.shape();
  Index rows = 0;
  for (const auto* v : visits) {
    v->validate(shape);
    rows += static_cast<Index>(v->cells.size());
  }
  ObservationModel om{Eigen::VectorXd::Zero(rows), Eigen::MatrixXd::Zero(rows, coords.size()), Eigen::VectorXd::Zero(rows)};
  const int k = shape.coefficients();
  Index r = 0;
  for (const auto* v : visits) {
    for (const auto& c : v->cells) {
      om.observed(r) = c.count;
      if (c.exposure > 0.0) {
        const double yhat = c.exposure * guarded_exp(params.log_intensity(v->z, c.child, c.row));
        om.predicted(r) = yhat;
        const Index block = shape.index(c.child, 0, 0);
        for (Index j = 0; j < coords.size(); ++j) {
          const Index idx = coords.indices()[static_cast<std::size_t>(j)] - block;
          if (idx < 0 || idx >= shape.child_size()) continue;
          const int g = static_cast<int>(idx / k);
          const double a = row_indicator(shape, c.row, g);
          if (a != 0.0) om.jacobian(r, j) = yhat * a * v->z[idx % k];
        }
      }
      ++r;
    }
  }
  return om;
}

Eigen::MatrixXd observation_jacobian(const CompactParams& params, const VisitObservation& obs) {
  const TrackedCoordinates all(params);
  return observation_model(all, params.values(), {&obs}).jacobian;
}

EkfState initial_state(const TrackedCoordinates& coords, const EkfConfig& config) {
  if (!(config.initial_variance >= 0.0) || !(config.process_noise >= 0.0)) {
    throw InputError("EKF variances must be non-negative");
  }
  const Index n = coords.size();
  EkfState s;
  s.mean = coords.restrict(coords.base().values());
  s.cov = config.initial_variance * Eigen::MatrixXd::Identity(n, n);
  if (config.transition) {
    if (config.transition->rows() != n || config.transition->cols() != n) {
      throw DimensionError("transition matrix does not match the tracked state");
    }
    s.transition = *config.transition;
  } else {
    s.transition = Eigen::MatrixXd::Identity(n, n);
  }
  s.process_noise = config.process_noise * Eigen::MatrixXd::Identity(n, n);
  s.transition_condition = condition_number(s.transition);
  return s;
}

EkfState predict_step(const EkfState& state) {
  EkfState out = state;
  out.mean = state.transition * state.mean;
  out.cov = state.transition * state.cov * state.transition.transpose() + state.process_noise;
  symmetrize(out.cov);
  if (!out.mean.allFinite() || !out.cov.allFinite()) throw NumericalError("EKF prediction produced non-finite values");
  ++out.time_index;
  out.last_update.reset();
  return out;
}

Eigen::MatrixXd kalman_gain(const Eigen::MatrixXd& prior, const Eigen::MatrixXd& jacobian,
                            const Eigen::VectorXd& noise_diag, double jitter, bool* jitter_applied) {
  const Eigen::MatrixXd hp = jacobian * prior;
  Eigen::MatrixXd s = hp * jacobian.transpose();
  s.diagonal() += noise_diag;
  symmetrize(s);
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  bool jittered = false;
  if (llt.info() != Eigen::Success) {
    s.diagonal().array() += jitter;
    llt.compute(s);
    jittered = true;
    if (llt.info() != Eigen::Success) throw NumericalError("innovation covariance is singular even after jitter");
  }
  if (jitter_applied) *jitter_applied = jittered;
  return llt.solve(hp).transpose();
}

Eigen::MatrixXd joseph_covariance(const Eigen::MatrixXd& prior, const Eigen::MatrixXd& gain,
                                  const Eigen::MatrixXd& jacobian, const Eigen::VectorXd& noise_diag) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(prior.rows(), prior.cols()) - gain * jacobian;
  return a * prior * a.transpose() + gain * noise_diag.asDiagonal() * gain.transpose();
}

EkfState update_step(const EkfState& state, const TrackedCoordinates& coords,
                     const std::vector<const VisitObservation*>& visits, double jitter) {
  const ObservationModel full = observation_model(coords, state.mean, visits);
  std::vector<Index> keep;
  for (Index r = 0; r < full.predicted.size(); ++r) {
    if (full.predicted(r) > 0.0) keep.push_back(r);
  }
  EkfState out = state;
  UpdateDiagnostics diag;
  diag.observations = static_cast<int>(keep.size());
  if (keep.empty()) {
    out.last_update = diag;
    return out;
  }
  const Index m = static_cast<Index>(keep.size());
  Eigen::MatrixXd h(m, full.jacobian.cols());
  Eigen::VectorXd yhat(m), y(m);
  for (Index r = 0; r < m; ++r) {
    const Index src = keep[static_cast<std::size_t>(r)];
    h.row(r) = full.jacobian.row(src);
    yhat(r) = full.predicted(src);
    y(r) = full.observed(src);
  }
  const Eigen::MatrixXd gain = kalman_gain(state.cov, h, yhat, jitter, &diag.jitter_applied);
  const Eigen::VectorXd innovation = y - yhat;
  out.mean = state.mean + gain * innovation;
  out.cov = state.cov - gain * (h * state.cov);
  symmetrize(out.cov);
  if (!out.mean.allFinite() || !out.cov.allFinite()) throw NumericalError("EKF update produced non-finite values");
  diag.innovation_norm = innovation.norm();
  diag.jacobian_norm = spectral_norm(h);
  diag.max_noise = yhat.maxCoeff();
  out.last_update = diag;
  return out;
}

EkfState update_step(const EkfState& state, const TrackedCoordinates& coords, const VisitObservation& obs,
                     double jitter) {
  return update_step(state, coords, std::vector<const VisitObservation*>{&obs}, jitter);
}

TransitionEstimate estimate_transition_matrix(const std::vector<Eigen::VectorXd>& history, double ridge) {
  if (history.empty()) throw InputError("transition estimation needs at least one snapshot");
  const Index n = history.front().size();
  for (const auto& h : history) {
    if (h.size() != n) throw DimensionError("snapshots differ in length");
  }
  TransitionEstimate out{Eigen::MatrixXd::Identity(n, n), false, false};
  if (history.size() < 3) {
    out.insufficient_history = true;
    return out;
  }
  const Index t = static_cast<Index>(history.size()) - 1;
  Eigen::MatrixXd b0(n, t), b1(n, t);
  for (Index k = 0; k < t; ++k) {
    b0.col(k) = history[static_cast<std::size_t>(k)];
    b1.col(k) = history[static_cast<std::size_t>(k + 1)];
  }
  Eigen::MatrixXd g = b0 * b0.transpose();
  const double r = ridge * std::max(1.0, g.trace() / static_cast<double>(n));
  Eigen::FullPivLU<Eigen::MatrixXd> lu(g);
  lu.setThreshold(1e-10);
  out.rank_deficient = lu.rank() < n;
  g.diagonal().array() += r;
  // Written as I + (B1 - B0) B0^T (B0 B0^T + rI)^-1, which is exact for a constant history.
  const Eigen::MatrixXd cross = b0 * (b1 - b0).transpose();
  out.transition += g.ldlt().solve(cross).transpose();
  return out;
}

FilterRun run_filter(const CompactParams& initial, const std::vector<VisitObservation>& visits, const EkfConfig& config) {
  FilterRun run;
  run.coords = config.track_all ? TrackedCoordinates(initial) : TrackedCoordinates::surviving(initial, config.edge_threshold);
  EkfState state = initial_state(run.coords, config);
  run.states.push_back(state);
  run.tensors.push_back(expand(initial));
  std::size_t k = 0;
  while (k < visits.size()) {
    std::vector<const VisitObservation*> batch{&visits[k]};
    const double t = visits[k].time;
    if (k > 0 && t < visits[k - 1].time) throw DataError("visits are not time-ordered");
    ++k;
    while (k < visits.size() && visits[k].time == t) batch.push_back(&visits[k++]);
    state = update_step(predict_step(state), run.coords, batch, config.jitter);
    state.time = t;
    run.states.push_back(state);
    run.tensors.push_back(expand(run.coords.embed(state.mean)));
  }
  return run;
}

StabilityReport stability_report(const std::vector<EkfState>& states, const StabilityConfig& config) {
  if (states.empty()) throw InputError("stability report needs at least one state");
  StabilityReport rep;
  rep.min_transition_singular = std::numeric_limits<double>::infinity();
  for (const auto& s : states) {
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(s.transition).singularValues();
    if (sv.size() > 0) {
      rep.sup_transition_norm = std::max(rep.sup_transition_norm, sv(0));
      rep.min_transition_singular = std::min(rep.min_transition_singular, sv(sv.size() - 1));
    }
    if (s.process_noise.size() > 0) {
      rep.max_process_noise = std::max(rep.max_process_noise, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.process_noise, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
    }
    double e = std::sqrt(std::max(0.0, s.cov.trace()));
    if (s.last_update) {
      rep.sup_jacobian_norm = std::max(rep.sup_jacobian_norm, s.last_update->jacobian_norm);
      rep.max_observation_noise = std::max(rep.max_observation_noise, s.last_update->max_noise);
      e += s.last_update->innovation_norm;
    }
    if (!std::isfinite(e)) e = std::numeric_limits<double>::infinity();
    rep.error_sequence.push_back(e);
    rep.max_error = std::max(rep.max_error, e);
  }
  if (!std::isfinite(rep.min_transition_singular)) rep.min_transition_singular = 0.0;
  rep.bounded_dynamics = rep.sup_transition_norm <= config.transition_bound && rep.sup_jacobian_norm <= config.jacobian_bound;
  rep.nonsingular_transition = rep.min_transition_singular > config.singular_tolerance;
  rep.bounded_noise = rep.max_process_noise <= config.noise_bound && rep.max_observation_noise <= config.noise_bound;
  rep.bounded_error = rep.max_error <= config.error_bound;
  return rep;
}

double coefficient_mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionError("coefficient vectors differ in length");
  return a.size() == 0 ? 0.0 : (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace dfctbn
