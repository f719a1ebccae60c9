#pragma once

// Poisson-regression estimation of the conditional intensities: unpenalized
// maximum likelihood (damped Newton) and the adaptive group lasso (monotone
// FISTA). The log-likelihood separates over children, so every solver works
// child by child on a ChildDesign.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dfctbn/ctbn.hpp"
#include "dfctbn/model.hpp"

namespace dfctbn {

struct FitConfig {
  double lambda = 0.0;
  int cv_folds = 5;
  /// Newton iterations for the MLE.
  int max_iter = 500;
  /// Proximal-gradient iterations for the penalized fit.
  int prox_max_iter = 20000;
  /// Relative objective change at which an iteration counts as converged.
  double tol = 1e-8;
  /// Stationarity tolerance, scaled by 1 + (transition count of the child):
  /// gradient for the MLE, gradient mapping for the penalized fit.
  double grad_tol = 1e-6;
  double edge_threshold = 1e-6;
  bool penalize_own_state = true;
  /// Adaptive weights use max(||beta~_g||, weight_floor).
  double weight_floor = 1e-8;
  int threads = 1;
  std::uint64_t seed = 0;

  /// Throws InputError on out-of-range values.
  void validate() const;
};

/// Data of one child: one row per occupied (stratum, tensor-row) cell.
struct ChildDesign {
  Eigen::MatrixXd x;         // cells x child_size, rows kron(a_r, z)
  Eigen::VectorXd exposure;  // T per cell
  Eigen::VectorXd counts;    // M per cell

  double total_count() const { return counts.sum(); }
};

std::vector<ChildDesign> build_designs(const ModelShape& shape, const std::vector<RiskStratum>& strata);

/// Sum over strata, cells and children of M*eta - T*exp(eta), eta = z.beta.
/// Throws OverflowError when an exponent exceeds the guard.
double log_likelihood(const CompactParams& params, const std::vector<RiskStratum>& strata);
double log_likelihood(const CompactParams& params, const RiskFactors& z, const SufficientStats& stats);

/// Child-level pieces; non-throwing, returning -inf on overflow.
double child_log_likelihood(const ChildDesign& d, const Eigen::VectorXd& theta);
Eigen::VectorXd child_gradient(const ChildDesign& d, const Eigen::VectorXd& theta);
/// Negative Hessian X^T diag(T exp(eta)) X (positive semidefinite).
Eigen::MatrixXd child_information(const ChildDesign& d, const Eigen::VectorXd& theta);

/// Gradient of log_likelihood with respect to the compact vector.
Eigen::VectorXd log_likelihood_gradient(const CompactParams& params, const std::vector<RiskStratum>& strata);

struct SolverReport {
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  /// Objective after every accepted iteration (first entry: start point).
  std::vector<double> trace;
};

struct MleResult {
  CompactParams params;
  /// Standard errors from the inverse information; 0 for pinned coefficients.
  Eigen::VectorXd std_errors;
  /// Compact indices of coefficients with no exposure, pinned to 0.
  std::vector<Index> pinned;
  std::vector<SolverReport> reports;  // one per child
  double log_likelihood = 0.0;
};

MleResult fit_mle(const ModelShape& shape, const std::vector<RiskStratum>& strata, const FitConfig& config);
MleResult fit_mle(const ModelShape& shape, const std::vector<Trajectory>& data, const FitConfig& config);

/// Per-group penalty weights, laid out as (child, group); 0 = unpenalized.
using GroupWeights = Eigen::MatrixXd;

/// lambda / max(||beta~_g||, floor) for penalized groups. The baseline group
/// is never penalized; the own-state group follows config.penalize_own_state.
GroupWeights adaptive_weights(const CompactParams& preliminary, const FitConfig& config);

/// max(0, 1 - w/||g||) * g.
Eigen::VectorXd block_soft_threshold(const Eigen::VectorXd& g, double w);

/// -loglik + k * sum_g w_g ||theta_g||, with k the group size.
double penalized_objective(const CompactParams& params, const std::vector<RiskStratum>& strata,
                           const GroupWeights& weights);

struct LassoResult {
  CompactParams params;
  GroupWeights weights;
  std::vector<SolverReport> reports;  // one per child
  double objective = 0.0;
};

/// Minimizes the penalized objective for fixed weights; `start` warm-starts.
LassoResult fit_group_lasso_weighted(const ModelShape& shape, const std::vector<RiskStratum>& strata,
                                     const GroupWeights& weights, const FitConfig& config,
                                     const CompactParams* start = nullptr);

/// Adaptive group lasso: weights from an MLE on the same data, then the
/// weighted fit at config.lambda.
LassoResult fit_group_lasso(const ModelShape& shape, const std::vector<RiskStratum>& strata, const FitConfig& config);
LassoResult fit_group_lasso(const ModelShape& shape, const std::vector<Trajectory>& data, const FitConfig& config);

struct CvPoint {
  double lambda = 0.0;
  /// Mean held-out negative log-likelihood over the folds used.
  double mean_nll = 0.0;
  double se_nll = 0.0;
  std::vector<double> fold_nll;
};

struct CvResult {
  double best_lambda = 0.0;
  std::vector<CvPoint> curve;  // in grid order
  std::vector<int> folds_used;
  std::vector<std::string> warnings;
};

/// Patient-level K-fold assignment, deterministic given the seed.
std::vector<int> assign_folds(std::size_t patients, int folds, std::uint64_t seed);

CvResult cross_validate(const ModelShape& shape, const std::vector<Trajectory>& data, const std::vector<double>& lambda_grid,
                        const FitConfig& config);

/// A(parent, child) is true iff ||theta_{child, parent}|| > threshold.
Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> extract_structure(const CompactParams& params, double edge_threshold);

}  // namespace dfctbn
