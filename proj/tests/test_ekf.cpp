#include <gtest/gtest.h>

#include <cmath>

#include "dfctbn/ekf.hpp"
#include "dfctbn/error.hpp"
#include "support/oracles.hpp"

using namespace dfctbn;

namespace {

Eigen::MatrixXd random_spd(Rng& rng, Index n, double scale) {
  const Eigen::MatrixXd a = oracle::random_matrix(rng, n, n);
  return scale * (a * a.transpose() / static_cast<double>(n) + 0.1 * Eigen::MatrixXd::Identity(n, n));
}

/// One tracked coefficient (the baseline intercept of child 0) of a 2-condition, intercept-only model.
TrackedCoordinates scalar_coords(double beta) {
  CompactParams p(ModelShape{2, 0});
  p.values()(0) = beta;
  return {p, std::vector<Index>{0}};
}

VisitObservation scalar_visit(double exposure, double count) {
  return {1.0, RiskFactors::from_covariates(Eigen::VectorXd(0)), {{0, 0, exposure, count}}};
}

VisitObservation random_visit(Rng& rng, const ModelShape& shape, double time, int cells) {
  Eigen::VectorXd cov(shape.covariates);
  for (Index c = 0; c < cov.size(); ++c) cov(c) = rng.uniform(-1.0, 1.0);
  VisitObservation v{time, RiskFactors::from_covariates(cov), {}};
  for (int k = 0; k < cells; ++k) {
    v.cells.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(shape.conditions))),
                       static_cast<int>(rng.below(static_cast<std::uint64_t>(shape.rows()))), rng.uniform(0.05, 2.0),
                       static_cast<double>(rng.below(3))});
  }
  return v;
}

CompactParams random_params(Rng& rng, const ModelShape& shape, double scale) {
  CompactParams p(shape);
  for (Index i = 0; i < p.values().size(); ++i) p.values()(i) = scale * rng.normal();
  return p;
}

}  // namespace

TEST(PredictStep, IdentityCases) {
  EkfState s;
  s.mean = Eigen::Vector3d(0.1, -0.2, 0.3);
  s.cov = Eigen::Matrix3d::Identity() * 0.5;
  s.transition = Eigen::Matrix3d::Identity();
  s.process_noise = Eigen::Matrix3d::Zero();
  auto p = predict_step(s);
  EXPECT_EQ(p.mean, s.mean);
  EXPECT_EQ(p.cov, s.cov);
  EXPECT_EQ(p.time_index, 1);
  s.process_noise = 1e-4 * Eigen::Matrix3d::Identity();
  p = predict_step(s);
  EXPECT_EQ(p.mean, s.mean);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(p.cov(i, i), 0.5 + 1e-4);
}

TEST(PredictStep, MatchesTripleLoopOracle) {
  Rng rng(61);
  for (int rep = 0; rep < 50; ++rep) {
    EkfState s;
    s.mean = oracle::random_matrix(rng, 3, 1);
    s.cov = random_spd(rng, 3, 1.0);
    s.transition = oracle::random_matrix(rng, 3, 3);
    s.process_noise = random_spd(rng, 3, 0.1);
    const auto p = predict_step(s);
    for (int i = 0; i < 3; ++i) {
      double m = 0.0;
      for (int k = 0; k < 3; ++k) m += s.transition(i, k) * s.mean(k);
      EXPECT_NEAR(p.mean(i), m, 1e-12);
      for (int j = 0; j < 3; ++j) {
        double c = s.process_noise(i, j);
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) c += s.transition(i, a) * s.cov(a, b) * s.transition(j, b);
        EXPECT_NEAR(p.cov(i, j), c, 1e-12);
      }
    }
  }
}

TEST(ObservationJacobian, ScalarAndZeroExposure) {
  const auto coords = scalar_coords(0.0);
  auto om = observation_model(coords, Eigen::VectorXd::Zero(1), {&static_cast<const VisitObservation&>(scalar_visit(1.0, 0.0))});
  EXPECT_EQ(om.predicted(0), 1.0);
  EXPECT_EQ(om.jacobian(0, 0), 1.0);
  const VisitObservation zero = scalar_visit(0.0, 0.0);
  om = observation_model(coords, Eigen::VectorXd::Zero(1), {&zero});
  EXPECT_EQ(om.jacobian.row(0).norm(), 0.0);
}

TEST(ObservationJacobian, MatchesCentralDifferences) {
  Rng rng(62);
  const ModelShape shape{3, 2};
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = random_params(rng, shape, 0.3);
    const auto v = random_visit(rng, shape, 1.0, 6);
    const Eigen::MatrixXd h = observation_jacobian(p, v);
    const TrackedCoordinates all(p);
    const double step = 1e-6;
    for (Index j = 0; j < p.values().size(); ++j) {
      Eigen::VectorXd a = p.values(), b = p.values();
      a(j) += step;
      b(j) -= step;
      const Eigen::VectorXd fd = (observation_model(all, a, {&v}).predicted - observation_model(all, b, {&v}).predicted) / (2 * step);
      for (Index r = 0; r < fd.size(); ++r) {
        EXPECT_LE(std::abs(fd(r) - h(r, j)), 1e-6 * std::max(1.0, std::abs(h(r, j))));
      }
    }
  }
}

TEST(ObservationJacobian, OverflowGuard) {
  const auto coords = scalar_coords(701.0);
  const VisitObservation v = scalar_visit(1.0, 0.0);
  EXPECT_THROW(observation_model(coords, Eigen::VectorXd::Constant(1, 701.0), {&v}), OverflowError);
}

TEST(UpdateStep, ScalarClosedForm) {
  const double beta = 0.2, p0 = 0.3, expo = 2.0, y = 3.0;
  const auto coords = scalar_coords(beta);
  EkfState s;
  s.mean = Eigen::VectorXd::Constant(1, beta);
  s.cov = Eigen::MatrixXd::Constant(1, 1, p0);
  s.transition = Eigen::MatrixXd::Identity(1, 1);
  s.process_noise = Eigen::MatrixXd::Zero(1, 1);
  const auto post = update_step(s, coords, scalar_visit(expo, y));
  // Hand algebra of the scalar filter.
  const double yhat = expo * std::exp(beta);
  const double h = yhat;
  const double innov_var = h * p0 * h + yhat;
  const double gain = p0 * h / innov_var;
  EXPECT_NEAR(post.mean(0), beta + gain * (y - yhat), 1e-12);
  EXPECT_NEAR(post.cov(0, 0), (1 - gain * h) * p0, 1e-12);
}

TEST(UpdateStep, InflatedNoiseLeavesPriorUnchanged) {
  Rng rng(63);
  const Eigen::MatrixXd prior = random_spd(rng, 4, 1.0);
  const Eigen::MatrixXd h = oracle::random_matrix(rng, 3, 4);
  const Eigen::VectorXd r = Eigen::Vector3d(0.5, 1.0, 2.0) * 1e9;
  const Eigen::MatrixXd k = kalman_gain(prior, h, r, 1e-9);
  EXPECT_LT(k.cwiseAbs().maxCoeff(), 1e-6);
  const Eigen::MatrixXd post = prior - k * h * prior;
  EXPECT_LT((post - prior).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(UpdateStep, ZeroInnovationKeepsMeanAndShrinksCovariance) {
  const ModelShape shape{2, 1};
  CompactParams p(shape);
  const TrackedCoordinates all(p);
  EkfState s = initial_state(all, EkfConfig{});
  // beta = 0 so yhat = exposure; integer exposures give y == yhat exactly.
  VisitObservation v{1.0, RiskFactors::from_covariates(Eigen::VectorXd::Constant(1, 1.0)), {{0, 0, 2.0, 2.0}, {1, 3, 1.0, 1.0}}};
  const auto post = update_step(s, all, v);
  EXPECT_EQ(post.mean, s.mean);
  EXPECT_LT(post.cov.trace(), s.cov.trace());
}

TEST(UpdateStep, JosephFormAgreesProperty) {
  Rng rng(64);
  const ModelShape shape{3, 2};
  for (int rep = 0; rep < 200; ++rep) {
    const auto p = random_params(rng, shape, 0.3);
    const TrackedCoordinates all(p);
    EkfState s = initial_state(all, EkfConfig{});
    s.cov = random_spd(rng, all.size(), 0.05);
    const auto v = random_visit(rng, shape, 1.0, 5);
    const auto om = observation_model(all, s.mean, {&v});
    const Eigen::MatrixXd k = kalman_gain(s.cov, om.jacobian, om.predicted, 1e-9);
    const auto post = update_step(s, all, v);
    const Eigen::MatrixXd joseph = joseph_covariance(s.cov, k, om.jacobian, om.predicted);
    ASSERT_LT((joseph - post.cov).cwiseAbs().maxCoeff(), 1e-8);
  }
}

// Property: P stays symmetric PSD and the update never increases the trace.
TEST(UpdateStep, CovarianceStaysPsdProperty) {
  Rng rng(65);
  const ModelShape shape{2, 1};
  const auto p = random_params(rng, shape, 0.3);
  const TrackedCoordinates all(p);
  EkfConfig cfg;
  cfg.initial_variance = 0.5;
  EkfState s = initial_state(all, cfg);
  for (int cycle = 0; cycle < 1000; ++cycle) {
    const auto prior = predict_step(s);
    const auto v = random_visit(rng, shape, cycle, 1 + static_cast<int>(rng.below(4)));
    s = update_step(prior, all, v);
    ASSERT_LE(s.cov.trace(), prior.cov.trace() + 1e-12);
    ASSERT_LT((s.cov - s.cov.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    ASSERT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(s.cov).eigenvalues().minCoeff(), -1e-8);
  }
}

TEST(UpdateStep, UninformativeObservationsLeaveFilterAtInitialCoefficients) {
  // F = I, Q = 0 and R -> infinity over every visit.
  Rng rng(66);
  const Index n = 5;
  Eigen::VectorXd mean = oracle::random_matrix(rng, n, 1);
  const Eigen::VectorXd start = mean;
  Eigen::MatrixXd cov = random_spd(rng, n, 1.0);
  for (int t = 0; t < 50; ++t) {
    const Eigen::MatrixXd h = oracle::random_matrix(rng, 2, n);
    const Eigen::MatrixXd k = kalman_gain(cov, h, Eigen::Vector2d(1e15, 1e15), 1e-9);
    mean += k * Eigen::Vector2d(rng.normal(), rng.normal());
    cov -= k * h * cov;
  }
  EXPECT_LT((mean - start).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(EstimateTransitionMatrix, ConstantHistoryGivesIdentity) {
  std::vector<Eigen::VectorXd> h(6, Eigen::Vector3d(0.4, -1.0, 2.0));
  const auto est = estimate_transition_matrix(h);
  EXPECT_LT((est.transition - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(est.rank_deficient);
  EXPECT_FALSE(est.insufficient_history);
}

TEST(EstimateTransitionMatrix, RecoversDiagonalSystem) {
  Rng rng(67);
  std::vector<Eigen::VectorXd> h{Eigen::Vector3d(1.0, -1.0, 0.5)};
  for (int t = 0; t < 2000; ++t) {
    Eigen::Vector3d next = 0.9 * h.back();
    for (int i = 0; i < 3; ++i) next(i) += 0.1 * rng.normal();
    h.push_back(next);
  }
  const auto est = estimate_transition_matrix(h);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(est.transition(i, i), 0.9, 0.02);
  EXPECT_FALSE(est.rank_deficient);
}

TEST(EstimateTransitionMatrix, ShortHistoryFallsBack) {
  const auto est = estimate_transition_matrix({Eigen::Vector2d(1.0, 2.0)});
  EXPECT_TRUE(est.insufficient_history);
  EXPECT_EQ(est.transition, Eigen::Matrix2d::Identity());
}

TEST(RunFilter, ZeroVisitsGiveInitialStateOnly) {
  Rng rng(68);
  const auto p = random_params(rng, ModelShape{3, 1}, 0.5);
  const auto run = run_filter(p, {}, EkfConfig{});
  ASSERT_EQ(run.states.size(), 1u);
  ASSERT_EQ(run.tensors.size(), 1u);
  EXPECT_EQ(run.tensors[0].values(), expand(p).values());
}

TEST(RunFilter, TracksSurvivingGroupsByDefault) {
  const ModelShape shape{3, 1};
  CompactParams p(shape);
  p.group(0, 0).setConstant(-1.0);
  p.group(1, 0).setConstant(-1.0);
  p.group(2, 0).setConstant(-1.0);
  p.group(2, edge_group(2, 0)).setConstant(0.5);
  EXPECT_EQ(run_filter(p, {}, EkfConfig{}).coords.size(), 4 * shape.coefficients());
  EkfConfig all;
  all.track_all = true;
  EXPECT_EQ(run_filter(p, {}, all).coords.size(), shape.compact_size());
}

TEST(RunFilter, RejectsUnorderedVisits) {
  const ModelShape shape{2, 0};
  const auto z = RiskFactors::from_covariates(Eigen::VectorXd(0));
  std::vector<VisitObservation> v{{2.0, z, {}}, {1.0, z, {}}};
  EXPECT_THROW(run_filter(CompactParams(shape), v, EkfConfig{}), DataError);
}

TEST(RunFilter, SplittingAVisitIntoZeroTimeVisitsIsInvariant) {
  Rng rng(69);
  const ModelShape shape{3, 2};
  const auto p = random_params(rng, shape, 0.3);
  std::vector<VisitObservation> whole, split;
  for (int t = 1; t <= 4; ++t) {
    auto v = random_visit(rng, shape, t, 6);
    whole.push_back(v);
    VisitObservation a{v.time, v.z, {}}, b{v.time, v.z, {}};
    for (const auto& c : v.cells) {
      // Half the exposure in each piece, the count split as evenly as possible.
      const double first = std::floor(c.count / 2);
      a.cells.push_back({c.child, c.row, c.exposure / 2, first});
      b.cells.push_back({c.child, c.row, c.exposure / 2, c.count - first});
    }
    split.push_back(a);
    split.push_back(b);
  }
  EkfConfig cfg;
  cfg.track_all = true;
  const auto r1 = run_filter(p, whole, cfg);
  const auto r2 = run_filter(p, split, cfg);
  ASSERT_EQ(r1.states.size(), r2.states.size());
  for (std::size_t k = 0; k < r1.states.size(); ++k) {
    EXPECT_LT((r1.states[k].mean - r2.states[k].mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((r1.states[k].cov - r2.states[k].cov).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(RunFilter, StaysWithinThreeSigmaOfTruthOnConsistentData) {
  const ModelShape shape{3, 1};
  CompactParams truth(shape);
  for (int i = 0; i < 3; ++i) {
    truth.group(i, 0) << std::log(0.3), 0.4;
    truth.group(i, 1)(0) = -0.7;
  }
  truth.group(1, edge_group(1, 0))(0) = 0.8;
  const auto tensor = expand(truth);
  Rng rng(70);
  Trajectory tr;
  ConditionProfile prof = ConditionProfile::zeros(3);
  const auto z = RiskFactors::from_covariates(Eigen::VectorXd::Constant(1, 1.0));
  tr.events.push_back({0.0, prof, z, EventKind::Visit});
  for (int t = 1; t <= 24; ++t) {
    prof = simulate_interval(tensor, z, prof, t - 1.0, t, rng, tr.events);
    tr.events.push_back({static_cast<double>(t), prof, z, EventKind::Visit});
  }
  const auto visits = observations_from_trajectory(tr, 3);
  ASSERT_EQ(visits.size(), 24u);
  const auto run = run_filter(truth, visits, EkfConfig{});
  const auto& last = run.states.back();
  const Eigen::VectorXd want = run.coords.restrict(truth.values());
  for (Index j = 0; j < want.size(); ++j) EXPECT_LE(std::abs(last.mean(j) - want(j)), 3.0 * std::sqrt(last.cov(j, j)));
}

TEST(StabilityReport, IdentityPassesAndSingularFlagged) {
  Rng rng(71);
  const ModelShape shape{2, 1};
  const auto p = random_params(rng, shape, 0.3);
  std::vector<VisitObservation> v;
  for (int t = 1; t <= 5; ++t) v.push_back(random_visit(rng, shape, t, 3));
  EkfConfig cfg;
  cfg.track_all = true;
  auto run = run_filter(p, v, cfg);
  EXPECT_TRUE(stability_report(run.states).all_pass());
  run.states[2].transition.row(1).setZero();
  const auto rep = stability_report(run.states);
  EXPECT_FALSE(rep.nonsingular_transition);
  EXPECT_TRUE(rep.bounded_dynamics);
}

TEST(StabilityReport, DivergingRunRaisesBoundednessFlag) {
  EkfState s;
  s.mean = Eigen::Vector2d(1.0, 1.0);
  s.cov = Eigen::Matrix2d::Identity();
  s.transition = 1.5 * Eigen::Matrix2d::Identity();
  s.process_noise = 1e-4 * Eigen::Matrix2d::Identity();
  std::vector<EkfState> states{s};
  for (int t = 0; t < 40; ++t) states.push_back(predict_step(states.back()));
  StabilityConfig cfg;
  cfg.error_bound = 100.0;
  cfg.transition_bound = 2.0;
  const auto rep = stability_report(states, cfg);
  EXPECT_FALSE(rep.bounded_error);
  EXPECT_GT(rep.max_error, 100.0);
  // The first states are still inside the bound.
  EXPECT_LT(rep.error_sequence[0], 100.0);
  EXPECT_TRUE(rep.bounded_dynamics);
}
