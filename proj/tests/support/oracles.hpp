#pragma once

// Reference implementations used only by tests. They are written with plain
// loops and share no code paths with the library beyond the data types.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "dfctbn/ctbn.hpp"
#include "dfctbn/model.hpp"
#include "dfctbn/random.hpp"
#include "dfctbn/tensor.hpp"

namespace oracle {

inline double scalar_rate(const std::vector<double>& z, const std::vector<double>& beta) {
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) s += z[k] * beta[k];
  return std::exp(s);
}

/// Coefficient slice of (child, row) assembled from the row's bits directly.
inline std::vector<double> additive_slice(const dfctbn::CompactParams& p, int child, int row) {
  const auto& s = p.shape();
  const int d = s.conditions;
  const int k = s.coefficients();
  std::vector<double> beta(static_cast<std::size_t>(k), 0.0);
  const int own = row >> (d - 1);
  std::vector<int> others;
  for (int j = 0; j < d; ++j)
    if (j != child) others.push_back(j);
  for (int c = 0; c < k; ++c) {
    double v = p.values()(s.index(child, 0, c));
    if (own) v += p.values()(s.index(child, 1, c));
    for (int b = 0; b < d - 1; ++b) {
      const int bit = (row >> (d - 2 - b)) & 1;
      if (bit) v += p.values()(s.index(child, 2 + b, c));
    }
    beta[static_cast<std::size_t>(c)] = v;
  }
  return beta;
}

/// Poisson log-likelihood summed term by term over strata, cells and children.
inline double log_likelihood(const dfctbn::CompactParams& p, const std::vector<dfctbn::RiskStratum>& strata) {
  const auto& s = p.shape();
  double total = 0.0;
  for (const auto& st : strata) {
    std::vector<double> z(st.z.values().data(), st.z.values().data() + st.z.size());
    for (int child = 0; child < s.conditions; ++child) {
      for (int row = 0; row < s.rows(); ++row) {
        const double t = st.stats.exposure()(row, child);
        const double m = st.stats.counts()(row, child);
        const auto beta = additive_slice(p, child, row);
        double eta = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) eta += z[c] * beta[c];
        total += m * eta - t * std::exp(eta);
      }
    }
  }
  return total;
}

/// n-mode product with explicit loops: out(.., j, ..) = sum_i U(j, i) T(.., i, ..).
inline dfctbn::Tensor3 mode_product(const dfctbn::Tensor3& t, const Eigen::MatrixXd& u, int mode) {
  auto dims = t.dims();
  dims[static_cast<std::size_t>(mode)] = u.rows();
  dfctbn::Tensor3 out(dims);
  for (Eigen::Index a = 0; a < dims[0]; ++a)
    for (Eigen::Index b = 0; b < dims[1]; ++b)
      for (Eigen::Index c = 0; c < dims[2]; ++c) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < t.dim(mode); ++i) {
          const double coef = u(mode == 0 ? a : mode == 1 ? b : c, i);
          const double v = mode == 0 ? t(i, b, c) : mode == 1 ? t(a, i, c) : t(a, b, i);
          s += coef * v;
        }
        out(a, b, c) = s;
      }
  return out;
}

inline dfctbn::Tensor3 random_tensor(dfctbn::Rng& rng, dfctbn::Tensor3::Dims dims) {
  dfctbn::Tensor3 t(dims);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.flat()(i) = rng.normal();
  return t;
}

inline Eigen::MatrixXd random_matrix(dfctbn::Rng& rng, Eigen::Index r, Eigen::Index c) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

/// One-sample Kolmogorov-Smirnov statistic against Exp(rate).
inline double ks_exponential(std::vector<double> xs, double rate) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = 1.0 - std::exp(-rate * xs[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic KS critical value sqrt(-ln(alpha/2)/2)/sqrt(n).
inline double ks_critical(double alpha, std::size_t n) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

}  // namespace oracle
