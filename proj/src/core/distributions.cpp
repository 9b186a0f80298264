// SPDX-License-Identifier: Apache-2.0
#include "wmd/core/distributions.hpp"

#include "wmd/core/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace wmd {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

void require_same_dim(const DiagonalGaussian& a, const DiagonalGaussian& b) {
  if (a.dim() != b.dim()) {
    throw ShapeError("Gaussian dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()));
  }
}

Matrix row_softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    RowVector e = (logits.row(r).array() - m).exp();
    p.row(r) = e / e.sum();
  }
  return p;
}

Matrix row_log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

}  // namespace

DiagonalGaussian::DiagonalGaussian(Vector mean_, Vector std_)
    : mean(std::move(mean_)), std(std::move(std_)) {
  validate();
}

void DiagonalGaussian::validate() const {
  if (mean.size() != std.size()) throw ShapeError("DiagonalGaussian: mean and std lengths differ");
  if (!mean.allFinite()) throw ShapeError("DiagonalGaussian: non-finite mean");
  for (Eigen::Index i = 0; i < std.size(); ++i) {
    if (!(std[i] > 0.0) || !std::isfinite(std[i])) {
      throw ShapeError("DiagonalGaussian: std must be positive and finite (index " +
                       std::to_string(i) + ")");
    }
  }
}

double DiagonalGaussian::log_prob(const Vector& x) const {
  if (x.size() != dim()) throw ShapeError("log_prob: dimension mismatch");
  const Vector z = (x - mean).cwiseQuotient(std);
  return -0.5 * z.squaredNorm() - std.array().log().sum() - kHalfLog2Pi * static_cast<double>(dim());
}

CategoricalLatent::CategoricalLatent(Matrix logits_) : logits(std::move(logits_)) {
  if (logits.rows() < 1 || logits.cols() < 1) throw ShapeError("CategoricalLatent: K and C must be >= 1");
  if (!logits.allFinite()) throw ShapeError("CategoricalLatent: non-finite logits");
}

Matrix CategoricalLatent::probabilities() const { return row_softmax(logits); }

Matrix CategoricalLatent::mode() const {
  Matrix out = Matrix::Zero(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    out(r, best) = 1.0;
  }
  return out;
}

double kl_diag_gaussian(const DiagonalGaussian& p, const DiagonalGaussian& q) {
  require_same_dim(p, q);
  p.validate();
  q.validate();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.dim(); ++i) {
    const double ratio = p.std[i] / q.std[i];
    const double diff = (p.mean[i] - q.mean[i]) / q.std[i];
    kl += 0.5 * (ratio * ratio + diff * diff - 1.0) - std::log(ratio);
  }
  return std::max(kl, 0.0);
}

double kl_categorical(const CategoricalLatent& p, const CategoricalLatent& q) {
  if (p.groups() != q.groups() || p.classes() != q.classes()) {
    throw ShapeError("kl_categorical: (K, C) shapes differ");
  }
  const Matrix pp = p.probabilities();
  const Matrix lp = row_log_softmax(p.logits);
  const Matrix lq = row_log_softmax(q.logits);
  double kl = 0.0;
  for (Eigen::Index r = 0; r < pp.rows(); ++r)
    for (Eigen::Index c = 0; c < pp.cols(); ++c)
      if (pp(r, c) > 0.0) kl += pp(r, c) * (lp(r, c) - lq(r, c));
  return std::max(kl, 0.0);
}

DiagonalGaussian geometric_mean_gaussian(std::span<const DiagonalGaussian> members,
                                         std::span<const double> weights) {
  if (members.empty()) throw ShapeError("geometric_mean_gaussian: empty member list");
  if (weights.size() != members.size()) throw ShapeError("geometric_mean_gaussian: one weight per member");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ShapeError("geometric_mean_gaussian: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ShapeError("geometric_mean_gaussian: weights do not sum to 1");
  const Eigen::Index d = members.front().dim();
  Vector precision = Vector::Zero(d);
  Vector weighted_mean = Vector::Zero(d);
  for (std::size_t i = 0; i < members.size(); ++i) {
    const DiagonalGaussian& m = members[i];
    if (m.dim() != d) throw ShapeError("geometric_mean_gaussian: member dimensions differ");
    m.validate();
    const Vector prec = m.std.array().square().inverse();
    precision += weights[i] * prec;
    weighted_mean += weights[i] * prec.cwiseProduct(m.mean);
  }
  return DiagonalGaussian(weighted_mean.cwiseQuotient(precision), precision.cwiseSqrt().cwiseInverse());
}

double gjs_uncertainty(std::span<const DiagonalGaussian> members) {
  if (members.size() < 2) throw ShapeError("gjs_uncertainty: need at least two members");
  const bool identical = std::all_of(members.begin() + 1, members.end(), [&](const DiagonalGaussian& m) {
    return m.mean == members.front().mean && m.std == members.front().std;
  });
  if (identical) {
    members.front().validate();
    return 0.0;
  }
  const std::vector<double> weights(members.size(), 1.0 / static_cast<double>(members.size()));
  const DiagonalGaussian g = geometric_mean_gaussian(members, weights);
  double u = 0.0;
  for (const DiagonalGaussian& m : members) u += kl_diag_gaussian(m, g);
  return u / static_cast<double>(members.size());
}

double variance_of_means(std::span<const DiagonalGaussian> members) {
  if (members.size() < 2) throw ShapeError("variance_of_means: need at least two members");
  const Eigen::Index d = members.front().dim();
  Vector mu = Vector::Zero(d);
  for (const auto& m : members) {
    if (m.dim() != d) throw ShapeError("variance_of_means: member dimensions differ");
    mu += m.mean;
  }
  mu /= static_cast<double>(members.size());
  double var = 0.0;
  for (const auto& m : members) var += (m.mean - mu).squaredNorm();
  return var / static_cast<double>(members.size()) / static_cast<double>(d);
}

Vector sample_gaussian(const DiagonalGaussian& dist, Rng& rng) {
  const Vector eps = rng.normal_vector(dist.dim());
  return dist.mean + dist.std.cwiseProduct(eps);
}

Matrix sample_one_hot(const Matrix& probs, Rng& rng) {
  Matrix out = Matrix::Zero(probs.rows(), probs.cols());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    Eigen::Index chosen = probs.cols() - 1;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      cumulative += probs(r, c);
      if (u < cumulative) {
        chosen = c;
        break;
      }
    }
    // Never land on a zero-probability class through rounding in the tail.
    while (probs(r, chosen) <= 0.0 && chosen > 0) --chosen;
    out(r, chosen) = 1.0;
  }
  return out;
}

Matrix sample_categorical(const CategoricalLatent& lat, Rng& rng) {
  return sample_one_hot(lat.probabilities(), rng);
}

namespace ad {

Var kl_diag_gaussian(Var mean_p, Var std_p, Var mean_q, Var std_q) {
  // log(sq / sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2, summed per row
  Var log_ratio = sub(log(std_q), log(std_p));
  Var num = add(square(std_p), square(sub(mean_p, mean_q)));
  Var quad = div(num, scale(square(std_q), 2.0));
  return row_sums(add_scalar(add(log_ratio, quad), -0.5));
}

Var kl_categorical(Var logits_p, Var logits_q, Eigen::Index groups) {
  Var lp = log_softmax_groups(logits_p, groups);
  Var lq = log_softmax_groups(logits_q, groups);
  Var p = exp(lp);
  return row_sums(mul(p, sub(lp, lq)));
}

Var gaussian_nll(Var target, Var mean, Var std) {
  Var z = div(sub(target, mean), std);
  Var per = add(scale(square(z), 0.5), log(std));
  return add_scalar(row_sums(per), kHalfLog2Pi * static_cast<double>(target.cols()));
}

Var gaussian_nll_unit(Var target, Var mean) {
  Var per = scale(square(sub(target, mean)), 0.5);
  return add_scalar(row_sums(per), kHalfLog2Pi * static_cast<double>(target.cols()));
}

}  // namespace ad
}  // namespace wmd
