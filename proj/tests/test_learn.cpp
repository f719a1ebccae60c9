#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "dfctbn/error.hpp"
#include "dfctbn/learn.hpp"
#include "support/oracles.hpp"

using namespace dfctbn;

namespace {

CompactParams random_params(Rng& rng, const ModelShape& shape, double scale) {
  CompactParams p(shape);
  for (Index i = 0; i < p.values().size(); ++i) p.values()(i) = scale * rng.normal();
  return p;
}

std::vector<RiskStratum> random_strata(Rng& rng, const ModelShape& shape, int n) {
  std::vector<RiskStratum> out;
  for (int s = 0; s < n; ++s) {
    Eigen::VectorXd cov(shape.covariates);
    for (Index c = 0; c < cov.size(); ++c) cov(c) = rng.uniform(-1.0, 1.0);
    SufficientStats st(shape.conditions);
    for (Index i = 0; i < st.exposure().size(); ++i) {
      if (rng.uniform() < 0.7) {
        st.exposure()(i) = rng.uniform(0.0, 3.0);
        st.counts()(i) = static_cast<double>(rng.below(4));
      }
    }
    out.push_back({RiskFactors::from_covariates(cov), st});
  }
  return out;
}

/// Patients with binary covariates, each followed for `horizon` years.
std::vector<Trajectory> simulate_patients(const CompactParams& truth, int n, double horizon, std::uint64_t seed) {
  const auto tensor = expand(truth);
  Rng rng(seed);
  std::vector<Trajectory> out;
  for (int p = 0; p < n; ++p) {
    Eigen::VectorXd cov(truth.shape().covariates);
    for (Index c = 0; c < cov.size(); ++c) cov(c) = static_cast<double>(rng.below(2));
    std::vector<std::uint8_t> init(static_cast<std::size_t>(truth.shape().conditions));
    for (auto& b : init) b = static_cast<std::uint8_t>(rng.below(2));
    auto tr = sample_trajectory(tensor, RiskFactors::from_covariates(cov), ConditionProfile(init), horizon, rng.next());
    tr.patient_id = "p" + std::to_string(p);
    out.push_back(std::move(tr));
  }
  return out;
}

CompactParams sparse_truth(const ModelShape& shape) {
  CompactParams p(shape);
  for (int i = 0; i < shape.conditions; ++i) {
    p.group(i, 0)(0) = std::log(0.4);
    p.group(i, 1)(0) = -0.5;
  }
  p.group(1, edge_group(1, 0))(0) = 1.0;
  p.group(2, edge_group(2, 1))(0) = -0.9;
  return p;
}

}  // namespace

TEST(LogLikelihood, UnitCellAndEmpty) {
  const ModelShape shape{2, 0};
  SufficientStats st(2);
  st.exposure()(0, 0) = 2.0;
  st.counts()(0, 0) = 1.0;
  const auto z = RiskFactors::from_covariates(Eigen::VectorXd(0));
  EXPECT_DOUBLE_EQ(log_likelihood(CompactParams(shape), z, st), -2.0);
  EXPECT_EQ(log_likelihood(CompactParams(shape), z, SufficientStats(2)), 0.0);
  EXPECT_EQ(log_likelihood(CompactParams(shape), {}), 0.0);
}

TEST(LogLikelihood, MatchesTermByTermOracle) {
  Rng rng(41);
  for (int rep = 0; rep < 50; ++rep) {
    const ModelShape shape{2 + static_cast<int>(rng.below(3)), static_cast<int>(rng.below(4))};
    const auto strata = random_strata(rng, shape, 1 + static_cast<int>(rng.below(5)));
    const auto p = random_params(rng, shape, 0.4);
    const double want = oracle::log_likelihood(p, strata);
    EXPECT_NEAR(log_likelihood(p, strata), want, 1e-10 * std::abs(want));
  }
}

TEST(LogLikelihood, GradientMatchesCentralDifferences) {
  Rng rng(42);
  const ModelShape shape{3, 2};
  const auto strata = random_strata(rng, shape, 4);
  const auto p = random_params(rng, shape, 0.3);
  const Eigen::VectorXd g = log_likelihood_gradient(p, strata);
  const double h = 1e-5;
  for (Index j = 0; j < p.values().size(); ++j) {
    CompactParams a = p, b = p;
    a.values()(j) += h;
    b.values()(j) -= h;
    const double fd = (log_likelihood(a, strata) - log_likelihood(b, strata)) / (2 * h);
    EXPECT_LE(std::abs(fd - g(j)), 1e-5 * std::max(1.0, std::abs(g(j)))) << "coefficient " << j;
  }
}

TEST(LogLikelihood, OverflowIsFlagged) {
  const ModelShape shape{2, 0};
  SufficientStats st(2);
  st.exposure()(0, 0) = 1.0;
  CompactParams p(shape);
  p.group(0, 0)(0) = 800.0;
  EXPECT_THROW(log_likelihood(p, RiskFactors::from_covariates(Eigen::VectorXd(0)), st), OverflowError);
}

// Property: midpoint concavity on fixed data.
TEST(LogLikelihood, ConcavityProperty) {
  Rng rng(43);
  const ModelShape shape{3, 2};
  const auto strata = random_strata(rng, shape, 3);
  for (int rep = 0; rep < 1000; ++rep) {
    const auto a = random_params(rng, shape, 0.5);
    const auto b = random_params(rng, shape, 0.5);
    const CompactParams mid(shape, 0.5 * (a.values() + b.values()));
    ASSERT_GE(log_likelihood(mid, strata), 0.5 * (log_likelihood(a, strata) + log_likelihood(b, strata)) - 1e-9);
  }
}

TEST(LogLikelihood, DependsOnDataOnlyThroughStatistics) {
  // Two different trajectories with identical per-stratum statistics.
  const auto z = RiskFactors::from_covariates(Eigen::VectorXd::Constant(1, 1.0));
  Trajectory a, b;
  a.events = {{0.0, ConditionProfile({0, 0}), z, EventKind::Visit}, {1.0, ConditionProfile({0, 0}), z, EventKind::Visit},
              {3.0, ConditionProfile({1, 0}), z, EventKind::Visit}};
  b.events = {{5.0, ConditionProfile({0, 0}), z, EventKind::Visit}, {8.0, ConditionProfile({1, 0}), z, EventKind::Visit}};
  const auto sa = stratify({a}, 2);
  const auto sb = stratify({b}, 2);
  Rng rng(44);
  const auto p = random_params(rng, ModelShape{2, 1}, 0.5);
  EXPECT_EQ(log_likelihood(p, sa), log_likelihood(p, sb));
}

TEST(FitMle, IntercepOnlyClosedForm) {
  const ModelShape shape{2, 0};
  SufficientStats st(2);
  st.exposure()(0, 0) = 6.0;
  st.counts()(0, 0) = 3.0;
  const auto fit = fit_mle(shape, {{RiskFactors::from_covariates(Eigen::VectorXd(0)), st}}, FitConfig{});
  EXPECT_NEAR(fit.params.group(0, 0)(0), std::log(0.5), 1e-8);
  // Every coefficient without exposure is pinned and reported.
  EXPECT_EQ(fit.pinned.size(), static_cast<std::size_t>(shape.compact_size() - 1));
  for (Index j : fit.pinned) EXPECT_EQ(fit.params.values()(j), 0.0);
}

TEST(FitMle, NewtonObjectiveNeverDecreases) {
  const ModelShape shape{3, 1};
  const auto data = simulate_patients(sparse_truth(shape), 300, 6.0, 45);
  const auto fit = fit_mle(shape, data, FitConfig{});
  for (const auto& rep : fit.reports) {
    EXPECT_TRUE(rep.converged);
    for (std::size_t k = 1; k < rep.trace.size(); ++k) EXPECT_GE(rep.trace[k], rep.trace[k - 1]);
  }
  const Eigen::VectorXd g = log_likelihood_gradient(fit.params, stratify(data, 3));
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-6 * (1.0 + sufficient_statistics(data, 3).counts().sum()));
}

TEST(FitMle, RecoversSimulatedCoefficientsWithinThreeStandardErrors) {
  const ModelShape shape{3, 1};
  const auto truth = sparse_truth(shape);
  const auto data = simulate_patients(truth, 2000, 5.0, 46);
  const auto fit = fit_mle(shape, data, FitConfig{});
  ASSERT_TRUE(fit.pinned.empty());
  for (Index j = 0; j < truth.values().size(); ++j) {
    EXPECT_LE(std::abs(fit.params.values()(j) - truth.values()(j)), 3.0 * fit.std_errors(j)) << "coefficient " << j;
  }
}

TEST(BlockSoftThreshold, Property) {
  Rng rng(47);
  for (int rep = 0; rep < 1000; ++rep) {
    Eigen::VectorXd g(1 + static_cast<Index>(rng.below(8)));
    for (Index i = 0; i < g.size(); ++i) g(i) = rng.normal();
    const double w = rng.uniform(0.0, 3.0);
    const Eigen::VectorXd want = std::max(0.0, 1.0 - w / g.norm()) * g;
    ASSERT_LE((block_soft_threshold(g, w) - want).cwiseAbs().maxCoeff(), 1e-15);
  }
  EXPECT_EQ(block_soft_threshold(Eigen::VectorXd::Zero(3), 1.0), Eigen::VectorXd::Zero(3));
}

TEST(AdaptiveWeights, FloorAndOwnStateSwitch) {
  const ModelShape shape{2, 0};
  CompactParams p(shape);
  p.group(0, 1)(0) = 2.0;
  FitConfig cfg;
  cfg.lambda = 4.0;
  auto w = adaptive_weights(p, cfg);
  EXPECT_EQ(w(0, 0), 0.0);
  EXPECT_EQ(w(0, 1), 2.0);
  EXPECT_EQ(w(0, 2), 4.0 / 1e-8);
  cfg.penalize_own_state = false;
  w = adaptive_weights(p, cfg);
  EXPECT_EQ(w(0, 1), 0.0);
}

TEST(FitGroupLasso, ZeroLambdaEqualsMle) {
  const ModelShape shape{3, 1};
  const auto data = simulate_patients(sparse_truth(shape), 300, 6.0, 48);
  const auto mle = fit_mle(shape, data, FitConfig{});
  const auto lasso = fit_group_lasso(shape, data, FitConfig{});
  EXPECT_EQ(lasso.params, mle.params);
}

TEST(FitGroupLasso, ZeroPenaltyEquivalenceOnRandomInstances) {
  Rng rng(49);
  for (int rep = 0; rep < 10; ++rep) {
    const ModelShape shape{3, static_cast<int>(rng.below(3))};
    const auto data = simulate_patients(sparse_truth(shape), 150, 5.0, rng.next());
    const auto strata = stratify(data, shape.conditions);
    const auto mle = fit_mle(shape, strata, FitConfig{});
    // Tiny but non-zero weights force the proximal-gradient path.
    GroupWeights w = GroupWeights::Constant(shape.conditions, shape.groups(), 1e-12);
    w.col(0).setZero();
    const auto lasso = fit_group_lasso_weighted(shape, strata, w, FitConfig{});
    EXPECT_NEAR(-lasso.objective, mle.log_likelihood, 1e-6 * std::abs(mle.log_likelihood));
  }
}

TEST(FitGroupLasso, HugeLambdaZeroesEveryPenalizedGroup) {
  const ModelShape shape{3, 1};
  const auto data = simulate_patients(sparse_truth(shape), 300, 6.0, 50);
  FitConfig cfg;
  cfg.lambda = 1e8;
  const auto fit = fit_group_lasso(shape, data, cfg);
  for (int i = 0; i < 3; ++i) {
    EXPECT_GT(fit.params.group(i, 0).norm(), 0.0);
    for (int g = 1; g < shape.groups(); ++g) EXPECT_EQ(fit.params.group(i, g).norm(), 0.0);
  }
  EXPECT_FALSE(extract_structure(fit.params, cfg.edge_threshold).any());
}

TEST(FitGroupLasso, ObjectiveIsMonotone) {
  const ModelShape shape{3, 1};
  const auto data = simulate_patients(sparse_truth(shape), 300, 6.0, 51);
  FitConfig cfg;
  cfg.lambda = 5.0;
  const auto fit = fit_group_lasso(shape, data, cfg);
  for (const auto& rep : fit.reports) {
    for (std::size_t k = 1; k < rep.trace.size(); ++k) ASSERT_LE(rep.trace[k], rep.trace[k - 1]);
  }
  EXPECT_NEAR(fit.objective, penalized_objective(fit.params, stratify(data, 3), fit.weights), 1e-9 * std::abs(fit.objective));
}

TEST(FitGroupLasso, RejectsNegativeLambda) {
  FitConfig cfg;
  cfg.lambda = -1.0;
  EXPECT_THROW(fit_group_lasso(ModelShape{2, 0}, std::vector<RiskStratum>{}, cfg), InputError);
}

struct ConvexOracleInstance {
  ModelShape shape;
  std::vector<RiskStratum> strata;
  GroupWeights weights;
  double objective = 0.0;
};

ConvexOracleInstance load_convex_oracle_instance() {
  std::ifstream in(DFCTBN_TEST_DATA_DIR "/group_lasso_instance.json");
  const auto j = nlohmann::json::parse(in);
  ConvexOracleInstance inst;
  inst.shape = ModelShape{j["conditions"].get<int>(), j["covariates"].get<int>()};
  for (const auto& s : j["strata"]) {
    const auto zv = s["z"].get<std::vector<double>>();
    SufficientStats st(inst.shape.conditions);
    for (int r = 0; r < inst.shape.rows(); ++r) {
      for (int i = 0; i < inst.shape.conditions; ++i) {
        st.exposure()(r, i) = s["exposure"][static_cast<std::size_t>(r)][static_cast<std::size_t>(i)].get<double>();
        st.counts()(r, i) = s["counts"][static_cast<std::size_t>(r)][static_cast<std::size_t>(i)].get<double>();
      }
    }
    inst.strata.push_back({RiskFactors(Eigen::Map<const Eigen::VectorXd>(zv.data(), static_cast<Index>(zv.size()))), st});
  }
  inst.weights.resize(inst.shape.conditions, inst.shape.groups());
  for (int i = 0; i < inst.shape.conditions; ++i)
    for (int g = 0; g < inst.shape.groups(); ++g) inst.weights(i, g) = j["weights"][static_cast<std::size_t>(i)][static_cast<std::size_t>(g)].get<double>();
  inst.objective = j["objective"].get<double>();
  return inst;
}

TEST(FitGroupLasso, MatchesConvexSolverOracle) {
  const auto inst = load_convex_oracle_instance();
  const auto fit = fit_group_lasso_weighted(inst.shape, inst.strata, inst.weights, FitConfig{});
  EXPECT_NEAR(fit.objective, inst.objective, 1e-6 * std::abs(inst.objective));
}

TEST(CrossValidate, SingleValueGridAndLargeMagnitudes) {
  const ModelShape shape{3, 1};
  const auto data = simulate_patients(sparse_truth(shape), 200, 6.0, 52);
  FitConfig cfg;
  cfg.cv_folds = 3;
  EXPECT_EQ(cross_validate(shape, data, {7.0}, cfg).best_lambda, 7.0);
  const auto cv = cross_validate(shape, data, {1.0, 1e2, 1e4}, cfg);
  ASSERT_EQ(cv.curve.size(), 3u);
  for (const auto& pt : cv.curve) {
    EXPECT_TRUE(std::isfinite(pt.mean_nll));
    EXPECT_EQ(pt.fold_nll.size(), 3u);
  }
  EXPECT_THROW(cross_validate(shape, data, {}, cfg), InputError);
}

TEST(CrossValidate, FoldsPartitionPatients) {
  const auto f = assign_folds(103, 5, 9);
  std::vector<int> sizes(5, 0);
  for (int k : f) ++sizes[static_cast<std::size_t>(k)];
  for (int s : sizes) EXPECT_TRUE(s == 20 || s == 21);
  EXPECT_EQ(assign_folds(103, 5, 9), f);
}

TEST(CrossValidate, FoldWithoutTransitionsIsSkipped) {
  const ModelShape shape{2, 0};
  CompactParams quiet(shape);
  quiet.group(0, 0)(0) = quiet.group(1, 0)(0) = std::log(0.3);
  auto data = simulate_patients(quiet, 40, 5.0, 53);
  // Patients without transitions; whichever fold they fill has nothing to score.
  FitConfig cfg;
  cfg.cv_folds = 2;
  const auto folds = assign_folds(data.size(), 2, cfg.seed);
  for (std::size_t p = 0; p < data.size(); ++p) {
    if (folds[p] == 1) {
      auto& ev = data[p].events;
      ev = {ev.front(), {ev.back().time, ev.front().profile, ev.front().z, EventKind::Visit}};
    }
  }
  const auto cv = cross_validate(shape, data, {0.0, 1.0}, cfg);
  EXPECT_EQ(cv.folds_used, std::vector<int>{0});
  EXPECT_EQ(cv.warnings.size(), 1u);
}

TEST(ExtractStructure, EmptyAndPlanted) {
  const ModelShape shape{4, 2};
  CompactParams p(shape);
  for (int i = 0; i < 4; ++i) p.group(i, 0).setConstant(-1.0);
  EXPECT_FALSE(extract_structure(p, 1e-6).any());
  p.group(3, edge_group(3, 1)).setConstant(2.0);
  p.group(2, 1).setConstant(5.0);  // own-state group is not an edge
  const auto a = extract_structure(p, 1e-6);
  EXPECT_EQ(a.count(), 1);
  EXPECT_TRUE(a(1, 3));
}
