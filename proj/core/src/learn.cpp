#include "dfctbn/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dfctbn/error.hpp"
#include "dfctbn/parallel.hpp"
#include "dfctbn/random.hpp"

namespace dfctbn {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_shape(const ModelShape& shape, const std::vector<RiskStratum>& strata) {
  shape.validate();
  for (const auto& s : strata) {
    if (s.z.size() != shape.coefficients() || s.stats.conditions() != shape.conditions) {
      throw DimensionError("risk stratum does not match the model shape");
    }
  }
}

/// Fitted means T*exp(eta); empty on overflow.
bool child_means(const ChildDesign& d, const Eigen::VectorXd& theta, Eigen::VectorXd& eta, Eigen::VectorXd& mu) {
  eta.noalias() = d.x * theta;
  if (eta.size() > 0 && !(eta.maxCoeff() <= kMaxExponent)) return false;
  mu = d.exposure.array() * eta.array().exp();
  return true;
}

double relative_change(double prev, double cur) { return std::abs(cur - prev) / std::max(1.0, std::abs(cur)); }

double group_norm_sum(const Eigen::VectorXd& theta, const Eigen::VectorXd& w, int k) {
  double s = 0.0;
  for (Index g = 0; g < w.size(); ++g) {
    if (w(g) > 0.0) s += w(g) * theta.segment(g * k, k).norm();
  }
  return s * k;
}

/// Damped Newton on one child restricted to `active` columns.
SolverReport newton_child(const ChildDesign& d, const std::vector<Index>& active, Eigen::VectorXd& theta,
                          const FitConfig& cfg) {
  SolverReport rep;
  const Index p = static_cast<Index>(active.size());
  Eigen::MatrixXd xa(d.x.rows(), p);
  for (Index j = 0; j < p; ++j) xa.col(j) = d.x.col(active[static_cast<std::size_t>(j)]);
  Eigen::VectorXd th(p);
  for (Index j = 0; j < p; ++j) th(j) = theta(active[static_cast<std::size_t>(j)]);

  ChildDesign da{xa, d.exposure, d.counts};
  const double scale = 1.0 + d.total_count();
  Eigen::VectorXd eta, mu;
  double obj = child_log_likelihood(da, th);
  if (!std::isfinite(obj)) {
    th.setZero();
    obj = child_log_likelihood(da, th);
  }
  rep.trace.push_back(obj);
  if (p == 0) {
    rep.converged = true;
    rep.objective = obj;
    return rep;
  }
  double last_change = kInf;
  for (rep.iterations = 0; rep.iterations < cfg.max_iter; ++rep.iterations) {
    child_means(da, th, eta, mu);
    const Eigen::VectorXd g = xa.transpose() * (da.counts - mu);
    const Eigen::MatrixXd info = xa.transpose() * mu.asDiagonal() * xa;
    Eigen::VectorXd step;
    {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 1e-12 * (1.0 + info.diagonal().maxCoeff())) {
        step = ldlt.solve(g);
      } else {
        // Ridge fallback for singular or indefinite information.
        double ridge = 1e-8 * (1.0 + info.diagonal().maxCoeff());
        Eigen::MatrixXd damped = info;
        while (true) {
          damped.diagonal() = info.diagonal().array() + ridge;
          Eigen::LLT<Eigen::MatrixXd> llt(damped);
          if (llt.info() == Eigen::Success) {
            step = llt.solve(g);
            break;
          }
          ridge *= 10.0;
        }
      }
    }
    const double decrement = g.dot(step);
    const double gmax = p > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
    if (gmax <= cfg.grad_tol * scale && (last_change <= cfg.tol || 0.5 * decrement <= cfg.tol * std::max(1.0, std::abs(obj)))) {
      // One more full step costs nothing and squares the remaining error.
      const Eigen::VectorXd polished = th + step;
      const double value = child_log_likelihood(da, polished);
      if (value >= obj) {
        th = polished;
        obj = value;
        rep.trace.push_back(obj);
      }
      rep.converged = true;
      break;
    }
    // Armijo backtracking; accepted steps never decrease the likelihood.
    double t = 1.0;
    double next = -kInf;
    Eigen::VectorXd cand;
    for (int h = 0; h < 60; ++h, t *= 0.5) {
      cand = th + t * step;
      next = child_log_likelihood(da, cand);
      if (next >= obj + 1e-4 * t * decrement) break;
    }
    if (!(next >= obj)) {
      rep.converged = gmax <= cfg.grad_tol * scale;
      break;
    }
    last_change = relative_change(obj, next);
    th = cand;
    obj = next;
    rep.trace.push_back(obj);
  }
  rep.objective = obj;
  for (Index j = 0; j < p; ++j) theta(active[static_cast<std::size_t>(j)]) = th(j);
  return rep;
}

std::vector<Index> exposed_columns(const ChildDesign& d, std::vector<Index>& pinned) {
  std::vector<Index> active;
  for (Index j = 0; j < d.x.cols(); ++j) {
    const double w = (d.exposure.array() * d.x.col(j).array().square()).sum();
    if (w > 0.0) {
      active.push_back(j);
    } else {
      pinned.push_back(j);
    }
  }
  return active;
}

/// Monotone FISTA with backtracking and adaptive restart for one child.
SolverReport fista_child(const ChildDesign& d, const Eigen::VectorXd& w, int k, Eigen::VectorXd& theta,
                         const FitConfig& cfg) {
  SolverReport rep;
  const double scale = 1.0 + d.total_count();
  auto smooth = [&](const Eigen::VectorXd& th) { return -child_log_likelihood(d, th); };
  auto full = [&](const Eigen::VectorXd& th, double f) { return f + group_norm_sum(th, w, k); };
  auto prox = [&](const Eigen::VectorXd& v, double step) {
    Eigen::VectorXd out = v;
    for (Index g = 0; g < w.size(); ++g) {
      if (w(g) > 0.0) out.segment(g * k, k) = block_soft_threshold(v.segment(g * k, k), step * k * w(g));
    }
    return out;
  };

  Eigen::VectorXd x = theta;
  double fx = smooth(x);
  if (!std::isfinite(fx)) {
    x.setZero();
    fx = smooth(x);
  }
  double Fx = full(x, fx);
  rep.trace.push_back(Fx);
  Eigen::VectorXd y = x, x_prev = x;
  double t = 1.0;
  double lip = 1.0;
  {
    // Start from the curvature along the gradient to avoid a long first backtrack.
    Eigen::VectorXd eta, mu;
    child_means(d, x, eta, mu);
    lip = std::max(1e-8, (mu.array() * (d.x.rowwise().squaredNorm()).array()).maxCoeff());
  }
  Eigen::VectorXd eta, mu;
  bool y_at_x = true;
  for (rep.iterations = 0; rep.iterations < cfg.prox_max_iter; ++rep.iterations) {
    double fy = smooth(y);
    if (!std::isfinite(fy)) {
      y = x;
      fy = fx;
      t = 1.0;
    }
    child_means(d, y, eta, mu);
    const Eigen::VectorXd grad = -(d.x.transpose() * (d.counts - mu));
    lip *= 0.9;
    Eigen::VectorXd z;
    double fz = kInf;
    for (int bt = 0; bt < 200; ++bt) {
      z = prox(y - grad / lip, 1.0 / lip);
      fz = smooth(z);
      const Eigen::VectorXd diff = z - y;
      if (std::isfinite(fz) && fz <= fy + grad.dot(diff) + 0.5 * lip * diff.squaredNorm() + 1e-12 * std::abs(fy)) break;
      lip *= 2.0;
    }
    const double Fz = full(z, fz);
    const double gmap = (lip * (y - z)).cwiseAbs().maxCoeff();
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    x_prev = x;
    const double Fprev = Fx;
    const bool accepted = Fz <= Fx;
    // The mapping is evaluated at y; it certifies x when y == x or x moved to z.
    const bool certifies_x = accepted || y_at_x;
    if (accepted) {
      x = z;
      fx = fz;
      Fx = Fz;
      y = x + (t / t_next) * (z - x) + ((t - 1.0) / t_next) * (x - x_prev);
      t = t_next;
    } else {
      // Momentum overshoot: keep x and restart the acceleration.
      y = x;
      t = 1.0;
    }
    y_at_x = !accepted;
    rep.trace.push_back(Fx);
    if (certifies_x && gmap <= cfg.grad_tol * scale && relative_change(Fprev, Fx) <= cfg.tol) {
      rep.converged = true;
      break;
    }
  }
  rep.objective = Fx;
  theta = x;
  return rep;
}

Eigen::VectorXd child_weights(const GroupWeights& weights, int child) { return weights.row(child).transpose(); }

}  // namespace

void FitConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be a finite non-negative number");
  if (cv_folds < 2) throw InputError("cv_folds must be at least 2");
  if (max_iter < 1 || prox_max_iter < 1) throw InputError("iteration limits must be positive");
  if (!(tol > 0.0) || !(grad_tol > 0.0)) throw InputError("tolerances must be positive");
  if (!(edge_threshold >= 0.0)) throw InputError("edge_threshold must be non-negative");
  if (!(weight_floor > 0.0)) throw InputError("weight_floor must be positive");
  if (threads < 1) throw InputError("threads must be at least 1");
}

std::vector<ChildDesign> build_designs(const ModelShape& shape, const std::vector<RiskStratum>& strata) {
  check_shape(shape, strata);
  std::vector<ChildDesign> out(static_cast<std::size_t>(shape.conditions));
  for (int i = 0; i < shape.conditions; ++i) {
    Index cells = 0;
    for (const auto& s : strata) cells += (s.stats.exposure().col(i).array() > 0.0).count();
    auto& d = out[static_cast<std::size_t>(i)];
    d.x.resize(cells, shape.child_size());
    d.exposure.resize(cells);
    d.counts.resize(cells);
    Index c = 0;
    for (const auto& s : strata) {
      for (int r = 0; r < shape.rows(); ++r) {
        const double t = s.stats.exposure()(r, i);
        if (t <= 0.0) {
          if (s.stats.counts()(r, i) > 0.0) throw DataError("transition counted in a cell without exposure");
          continue;
        }
        d.x.row(c) = cell_design(shape, r, s.z).transpose();
        d.exposure(c) = t;
        d.counts(c) = s.stats.counts()(r, i);
        ++c;
      }
    }
  }
  return out;
}

double child_log_likelihood(const ChildDesign& d, const Eigen::VectorXd& theta) {
  Eigen::VectorXd eta, mu;
  if (!child_means(d, theta, eta, mu)) return -kInf;
  return d.counts.dot(eta) - mu.sum();
}

Eigen::VectorXd child_gradient(const ChildDesign& d, const Eigen::VectorXd& theta) {
  Eigen::VectorXd eta, mu;
  if (!child_means(d, theta, eta, mu)) throw OverflowError("log-intensity exceeds the overflow guard of 700");
  return d.x.transpose() * (d.counts - mu);
}

Eigen::MatrixXd child_information(const ChildDesign& d, const Eigen::VectorXd& theta) {
  Eigen::VectorXd eta, mu;
  if (!child_means(d, theta, eta, mu)) throw OverflowError("log-intensity exceeds the overflow guard of 700");
  return d.x.transpose() * mu.asDiagonal() * d.x;
}

double log_likelihood(const CompactParams& params, const std::vector<RiskStratum>& strata) {
  const auto designs = build_designs(params.shape(), strata);
  double total = 0.0;
  for (int i = 0; i < params.shape().conditions; ++i) {
    const double li = child_log_likelihood(designs[static_cast<std::size_t>(i)], params.child_block(i));
    if (!std::isfinite(li)) throw OverflowError("log-likelihood is not finite (log-intensity above 700)");
    total += li;
  }
  return total;
}

double log_likelihood(const CompactParams& params, const RiskFactors& z, const SufficientStats& stats) {
  return log_likelihood(params, std::vector<RiskStratum>{{z, stats}});
}

Eigen::VectorXd log_likelihood_gradient(const CompactParams& params, const std::vector<RiskStratum>& strata) {
  const auto designs = build_designs(params.shape(), strata);
  Eigen::VectorXd g(params.values().size());
  for (int i = 0; i < params.shape().conditions; ++i) {
    g.segment(params.shape().index(i, 0, 0), params.shape().child_size()) =
        child_gradient(designs[static_cast<std::size_t>(i)], params.child_block(i));
  }
  return g;
}

MleResult fit_mle(const ModelShape& shape, const std::vector<RiskStratum>& strata, const FitConfig& config) {
  config.validate();
  const auto designs = build_designs(shape, strata);
  const int dcount = shape.conditions;
  MleResult res{CompactParams(shape), Eigen::VectorXd::Zero(shape.compact_size()), {}, {}, 0.0};
  res.reports.resize(static_cast<std::size_t>(dcount));
  std::vector<std::vector<Index>> pinned(static_cast<std::size_t>(dcount));
  std::vector<Eigen::VectorXd> thetas(static_cast<std::size_t>(dcount), Eigen::VectorXd::Zero(shape.child_size()));
  std::vector<Eigen::VectorXd> ses(static_cast<std::size_t>(dcount), Eigen::VectorXd::Zero(shape.child_size()));

  parallel_for(dcount, config.threads, [&](int i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto& d = designs[ui];
    const auto active = exposed_columns(d, pinned[ui]);
    res.reports[ui] = newton_child(d, active, thetas[ui], config);
    if (active.empty()) return;
    const Eigen::MatrixXd info = child_information(d, thetas[ui]);
    Eigen::MatrixXd ia(static_cast<Index>(active.size()), static_cast<Index>(active.size()));
    for (std::size_t a = 0; a < active.size(); ++a)
      for (std::size_t b = 0; b < active.size(); ++b) ia(static_cast<Index>(a), static_cast<Index>(b)) = info(active[a], active[b]);
    const Eigen::MatrixXd cov = ia.completeOrthogonalDecomposition().pseudoInverse();
    for (std::size_t a = 0; a < active.size(); ++a) ses[ui](active[a]) = std::sqrt(std::max(0.0, cov(static_cast<Index>(a), static_cast<Index>(a))));
  });

  for (int i = 0; i < dcount; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (!res.reports[ui].converged) {
      throw ConvergenceError("maximum-likelihood fit of condition " + std::to_string(i) + " did not converge in " +
                             std::to_string(config.max_iter) + " iterations");
    }
    res.params.child_block(i) = thetas[ui];
    res.std_errors.segment(shape.index(i, 0, 0), shape.child_size()) = ses[ui];
    for (Index j : pinned[ui]) res.pinned.push_back(shape.index(i, 0, 0) + j);
    res.log_likelihood += res.reports[ui].objective;
  }
  return res;
}

MleResult fit_mle(const ModelShape& shape, const std::vector<Trajectory>& data, const FitConfig& config) {
  return fit_mle(shape, stratify(data, shape.conditions), config);
}

GroupWeights adaptive_weights(const CompactParams& preliminary, const FitConfig& config) {
  const ModelShape& s = preliminary.shape();
  GroupWeights w = GroupWeights::Zero(s.conditions, s.groups());
  for (int i = 0; i < s.conditions; ++i) {
    for (int g = 1; g < s.groups(); ++g) {
      if (g == 1 && !config.penalize_own_state) continue;
      w(i, g) = config.lambda / std::max(preliminary.group(i, g).norm(), config.weight_floor);
    }
  }
  return w;
}

Eigen::VectorXd block_soft_threshold(const Eigen::VectorXd& g, double w) {
  const double n = g.norm();
  if (n <= w || n == 0.0) return Eigen::VectorXd::Zero(g.size());
  return (1.0 - w / n) * g;
}

double penalized_objective(const CompactParams& params, const std::vector<RiskStratum>& strata,
                           const GroupWeights& weights) {
  const ModelShape& s = params.shape();
  double pen = 0.0;
  for (int i = 0; i < s.conditions; ++i) pen += group_norm_sum(params.child_block(i), child_weights(weights, i), s.coefficients());
  return -log_likelihood(params, strata) + pen;
}

LassoResult fit_group_lasso_weighted(const ModelShape& shape, const std::vector<RiskStratum>& strata,
                                     const GroupWeights& weights, const FitConfig& config, const CompactParams* start) {
  config.validate();
  if (weights.rows() != shape.conditions || weights.cols() != shape.groups()) {
    throw DimensionError("group weight matrix does not match the model shape");
  }
  if (!(weights.array() >= 0.0).all()) throw InputError("group weights must be non-negative");
  const auto designs = build_designs(shape, strata);
  LassoResult res{start ? *start : CompactParams(shape), weights, {}, 0.0};
  res.reports.resize(static_cast<std::size_t>(shape.conditions));
  std::vector<Eigen::VectorXd> thetas(static_cast<std::size_t>(shape.conditions));
  for (int i = 0; i < shape.conditions; ++i) thetas[static_cast<std::size_t>(i)] = res.params.child_block(i);

  parallel_for(shape.conditions, config.threads, [&](int i) {
    const auto ui = static_cast<std::size_t>(i);
    const Eigen::VectorXd w = child_weights(weights, i);
    if ((w.array() == 0.0).all()) {
      // No penalty: the smooth problem, solved by Newton.
      std::vector<Index> pinned;
      const auto active = exposed_columns(designs[ui], pinned);
      for (Index j : pinned) thetas[ui](j) = 0.0;
      res.reports[ui] = newton_child(designs[ui], active, thetas[ui], config);
      res.reports[ui].objective = -res.reports[ui].objective;
      for (double& v : res.reports[ui].trace) v = -v;
    } else {
      res.reports[ui] = fista_child(designs[ui], w, shape.coefficients(), thetas[ui], config);
    }
  });

  for (int i = 0; i < shape.conditions; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (!res.reports[ui].converged) {
      throw ConvergenceError("group-lasso fit of condition " + std::to_string(i) + " did not converge in " +
                             std::to_string(res.reports[ui].iterations) + " iterations");
    }
    res.params.child_block(i) = thetas[ui];
    res.objective += res.reports[ui].objective;
  }
  return res;
}

LassoResult fit_group_lasso(const ModelShape& shape, const std::vector<RiskStratum>& strata, const FitConfig& config) {
  const MleResult mle = fit_mle(shape, strata, config);
  const GroupWeights weights = adaptive_weights(mle.params, config);
  if (config.lambda == 0.0) {
    // Unpenalized: the MLE is the solution, so return it untouched.
    return {mle.params, weights, mle.reports, -mle.log_likelihood};
  }
  return fit_group_lasso_weighted(shape, strata, weights, config, &mle.params);
}

LassoResult fit_group_lasso(const ModelShape& shape, const std::vector<Trajectory>& data, const FitConfig& config) {
  return fit_group_lasso(shape, stratify(data, shape.conditions), config);
}

std::vector<int> assign_folds(std::size_t patients, int folds, std::uint64_t seed) {
  if (folds < 2) throw InputError("cv_folds must be at least 2");
  std::vector<std::size_t> order(patients);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "cv-folds"));
  for (std::size_t i = patients; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<int> fold(patients);
  for (std::size_t pos = 0; pos < patients; ++pos) fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));
  return fold;
}

CvResult cross_validate(const ModelShape& shape, const std::vector<Trajectory>& data, const std::vector<double>& lambda_grid,
                        const FitConfig& config) {
  config.validate();
  if (lambda_grid.empty()) throw InputError("lambda grid is empty");
  for (double l : lambda_grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw InputError("lambda grid values must be finite and non-negative");
  }
  if (data.size() < static_cast<std::size_t>(config.cv_folds)) throw InputError("fewer patients than folds");

  CvResult out;
  out.curve.resize(lambda_grid.size());
  for (std::size_t g = 0; g < lambda_grid.size(); ++g) out.curve[g].lambda = lambda_grid[g];

  // Largest lambda first so each fit warm-starts from a sparser solution.
  std::vector<std::size_t> order(lambda_grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return lambda_grid[a] > lambda_grid[b]; });

  const auto fold = assign_folds(data.size(), config.cv_folds, config.seed);
  for (int f = 0; f < config.cv_folds; ++f) {
    std::vector<Trajectory> train, test;
    for (std::size_t p = 0; p < data.size(); ++p) (fold[p] == f ? test : train).push_back(data[p]);
    int held_out_transitions = 0;
    for (const auto& t : test) held_out_transitions += t.transitions();
    const auto test_strata = stratify(test, shape.conditions);
    double test_counts = 0.0;
    for (const auto& s : test_strata) test_counts += s.stats.counts().sum();
    if (held_out_transitions == 0 && test_counts == 0.0) {
      out.warnings.push_back("fold " + std::to_string(f) + " has no transitions and was skipped");
      continue;
    }
    const auto train_strata = stratify(train, shape.conditions);
    const MleResult mle = fit_mle(shape, train_strata, config);
    CompactParams warm = mle.params;
    for (std::size_t g : order) {
      FitConfig c = config;
      c.lambda = lambda_grid[g];
      const auto fit = fit_group_lasso_weighted(shape, train_strata, adaptive_weights(mle.params, c), c, &warm);
      warm = fit.params;
      out.curve[g].fold_nll.push_back(-log_likelihood(fit.params, test_strata));
    }
    out.folds_used.push_back(f);
  }
  if (out.folds_used.empty()) throw DataError("every cross-validation fold lacks transitions");

  std::size_t best = 0;
  for (std::size_t g = 0; g < out.curve.size(); ++g) {
    auto& pt = out.curve[g];
    const double n = static_cast<double>(pt.fold_nll.size());
    pt.mean_nll = std::accumulate(pt.fold_nll.begin(), pt.fold_nll.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : pt.fold_nll) ss += (v - pt.mean_nll) * (v - pt.mean_nll);
    pt.se_nll = n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
    const auto& b = out.curve[best];
    if (pt.mean_nll < b.mean_nll || (pt.mean_nll == b.mean_nll && pt.lambda > b.lambda)) best = g;
  }
  out.best_lambda = out.curve[best].lambda;
  return out;
}

Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> extract_structure(const CompactParams& params, double edge_threshold) {
  const ModelShape& s = params.shape();
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> a = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(s.conditions, s.conditions, false);
  for (int child = 0; child < s.conditions; ++child) {
    for (int g = 2; g < s.groups(); ++g) {
      a(group_parent(child, g), child) = params.group(child, g).norm() > edge_threshold;
    }
  }
  return a;
}

}  // namespace dfctbn
