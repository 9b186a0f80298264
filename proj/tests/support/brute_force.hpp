// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/core/dense.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace wmd::oracle {

// Straightforward O(n^2) densest point: full sort of each distance row.
inline std::size_t brute_force_densest(const std::vector<Vector>& pts, int k) {
  std::size_t best = 0;
  double best_score = 1e300;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) d.push_back(std::sqrt((pts[i] - pts[j]).array().square().sum()));
    std::sort(d.begin(), d.end());
    double s = 0.0;
    for (int m = 0; m < k; ++m) s += d[m];
    if (s / k < best_score) {
      best_score = s / k;
      best = i;
    }
  }
  return best;
}

// Cyclic Jacobi eigensolver for symmetric matrices; returns (values, vectors)
// sorted by descending value.
inline std::pair<Vector, Matrix> jacobi_eigen(Matrix a) {
  const Eigen::Index n = a.rows();
  Matrix v = Matrix::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
  Vector vals(n);
  Matrix vecs(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    vals(i) = a(order[i], order[i]);
    vecs.col(i) = v.col(order[i]);
  }
  return {vals, vecs};
}

}  // namespace wmd::oracle
