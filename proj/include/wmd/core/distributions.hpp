// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/core/dense.hpp"
#include "wmd/core/random.hpp"
#include "wmd/core/tape.hpp"

#include <span>
#include <vector>

namespace wmd {

/// Gaussian with diagonal covariance.
struct DiagonalGaussian {
  Vector mean;
  Vector std;

  DiagonalGaussian() = default;
  /// Throws ShapeError on a length mismatch or a nonpositive / non-finite scale.
  DiagonalGaussian(Vector mean_, Vector std_);

  Eigen::Index dim() const { return mean.size(); }
  void validate() const;
  double log_prob(const Vector& x) const;
};

/// K independent categorical groups over C classes each, as a K x C logit matrix.
struct CategoricalLatent {
  Matrix logits;

  CategoricalLatent() = default;
  explicit CategoricalLatent(Matrix logits_);

  Eigen::Index groups() const { return logits.rows(); }
  Eigen::Index classes() const { return logits.cols(); }
  /// Row-wise softmax.
  Matrix probabilities() const;
  /// One-hot of the most probable class per group (lowest index on ties).
  Matrix mode() const;
};

double kl_diag_gaussian(const DiagonalGaussian& p, const DiagonalGaussian& q);
double kl_categorical(const CategoricalLatent& p, const CategoricalLatent& q);

/// Normalized weighted geometric mean: precisions add with the weights and the
/// mean is the precision-weighted average of member means.
DiagonalGaussian geometric_mean_gaussian(std::span<const DiagonalGaussian> members,
                                         std::span<const double> weights);

/// Mean KL from each member to the uniform-weight geometric mean of all
/// members. Requires at least two members.
double gjs_uncertainty(std::span<const DiagonalGaussian> members);

/// Experimental secondary disagreement score: mean over dimensions of the
/// variance of member means.
double variance_of_means(std::span<const DiagonalGaussian> members);

/// Reparameterized draw mean + std * eps.
Vector sample_gaussian(const DiagonalGaussian& dist, Rng& rng);

/// Exact one-hot draw per group (K x C), by inverse CDF on one uniform per group.
Matrix sample_categorical(const CategoricalLatent& lat, Rng& rng);
/// Same draw from precomputed probabilities (one row per group).
Matrix sample_one_hot(const Matrix& probs, Rng& rng);

namespace ad {

/// Row-wise KL(p || q) between diagonal Gaussians; returns n x 1.
Var kl_diag_gaussian(Var mean_p, Var std_p, Var mean_q, Var std_q);
/// Row-wise KL between grouped categoricals given logits; returns n x 1.
Var kl_categorical(Var logits_p, Var logits_q, Eigen::Index groups);
/// Row-wise negative log density, summed over columns; returns n x 1.
Var gaussian_nll(Var target, Var mean, Var std);
/// As gaussian_nll with unit scale.
Var gaussian_nll_unit(Var target, Var mean);

}  // namespace ad
}  // namespace wmd
