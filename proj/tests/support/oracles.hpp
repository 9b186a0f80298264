// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference computations used by the unit and acceptance suites.
// Nothing here calls into the closed-form routines it is used to check.

#include "wmd/core/distributions.hpp"
#include "wmd/core/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace wmd::oracle {

struct Estimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

inline double gaussian_log_density(const DiagonalGaussian& d, const Vector& x) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = (x[i] - d.mean[i]) / d.std[i];
    lp += -0.5 * z * z - std::log(d.std[i]) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

/// Monte Carlo KL(p || q) = E_p[log p - log q].
inline Estimate monte_carlo_kl(const DiagonalGaussian& p, const DiagonalGaussian& q, int samples,
                               Rng& rng) {
  double sum = 0.0, sum_sq = 0.0;
  Vector x(p.dim());
  for (int s = 0; s < samples; ++s) {
    for (Eigen::Index i = 0; i < p.dim(); ++i) x[i] = p.mean[i] + p.std[i] * rng.normal();
    const double v = gaussian_log_density(p, x) - gaussian_log_density(q, x);
    sum += v;
    sum_sq += v * v;
  }
  const double n = samples;
  const double mean = sum / n;
  const double var = std::max(sum_sq / n - mean * mean, 0.0);
  return {mean, std::sqrt(var / n)};
}

/// Monte Carlo KL between grouped categoricals given probability rows.
inline Estimate monte_carlo_kl_categorical(const Matrix& p, const Matrix& q, int samples, Rng& rng) {
  double sum = 0.0, sum_sq = 0.0;
  for (int s = 0; s < samples; ++s) {
    double v = 0.0;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const double u = rng.uniform();
      double c = 0.0;
      Eigen::Index k = p.cols() - 1;
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        c += p(r, j);
        if (u < c) {
          k = j;
          break;
        }
      }
      v += std::log(p(r, k)) - std::log(q(r, k));
    }
    sum += v;
    sum_sq += v * v;
  }
  const double n = samples;
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(sum_sq / n - mean * mean, 0.0) / n)};
}

/// Direct double-sum KL between probability matrices (rows are groups).
inline double summed_kl(const Matrix& p, const Matrix& q) {
  double kl = 0.0;
  for (Eigen::Index r = 0; r < p.rows(); ++r)
    for (Eigen::Index c = 0; c < p.cols(); ++c)
      if (p(r, c) > 0) kl += p(r, c) * std::log(p(r, c) / q(r, c));
  return kl;
}

/// GJS by quadrature: per dimension, normalize prod_i p_i^(1/M) on a grid and
/// integrate each KL(p_i || G) numerically. Diagonal covariances make the KL
/// separable over dimensions.
inline double quadrature_gjs(std::span<const DiagonalGaussian> members, int grid = 20001) {
  const auto m = static_cast<double>(members.size());
  const Eigen::Index d = members.front().dim();
  double total = 0.0;
  for (Eigen::Index k = 0; k < d; ++k) {
    double lo = 1e300, hi = -1e300;
    for (const auto& g : members) {
      lo = std::min(lo, g.mean[k] - 12.0 * g.std[k]);
      hi = std::max(hi, g.mean[k] + 12.0 * g.std[k]);
    }
    const double dx = (hi - lo) / (grid - 1);
    std::vector<double> log_geo(grid);
    for (int i = 0; i < grid; ++i) {
      const double x = lo + dx * i;
      double acc = 0.0;
      for (const auto& g : members) {
        const double z = (x - g.mean[k]) / g.std[k];
        acc += (-0.5 * z * z - std::log(g.std[k] * std::sqrt(2.0 * std::numbers::pi))) / m;
      }
      log_geo[i] = acc;
    }
    // Simpson weights
    auto weight = [grid](int i) { return (i == 0 || i == grid - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
    double z_norm = 0.0;
    for (int i = 0; i < grid; ++i) z_norm += weight(i) * std::exp(log_geo[i]);
    z_norm *= dx / 3.0;
    const double log_z = std::log(z_norm);
    for (const auto& g : members) {
      double kl = 0.0;
      for (int i = 0; i < grid; ++i) {
        const double x = lo + dx * i;
        const double z = (x - g.mean[k]) / g.std[k];
        const double lp = -0.5 * z * z - std::log(g.std[k] * std::sqrt(2.0 * std::numbers::pi));
        kl += weight(i) * std::exp(lp) * (lp - (log_geo[i] - log_z));
      }
      total += kl * dx / 3.0 / m;
    }
  }
  return total;
}

}  // namespace wmd::oracle
