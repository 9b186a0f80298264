// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/rssm/rssm.hpp"
#include "wmd/training/replay_buffer.hpp"

namespace wmd::training {

/// Per-term means over batch and time; total is their sum.
struct ElboTerms {
  double total = 0.0;
  double recon_o = 0.0;
  double recon_r = 0.0;
  double recon_s = 0.0;
  double kl = 0.0;
};

struct ElboGraph {
  ad::Var loss;
  ElboTerms terms;
  /// Detached one-step tuples of the posterior unroll, one row per (t, b):
  /// inputs (h_{t-1}, z_{t-1}, a_t) and target h_t.
  Matrix transition_inputs;
  Matrix transition_targets;
};

/// Batched start belief: h = 0 and z = the prior mode at h = 0. The Gaussian
/// mode stays on the tape; the categorical mode is a constant.
std::pair<ad::Var, ad::Var> initial_belief(const rssm::Rssm& model, const BoundParameters& p, int rows);

/// Posterior unroll of every subsequence from the initial belief.
ElboGraph build_elbo(const rssm::Rssm& model, const BoundParameters& p, const SequenceBatch& batch,
                     rssm::LatentSampler& sampler);

/// Value-level ELBO (no gradient).
ElboTerms elbo_loss(const rssm::Rssm& model, const ParameterSet& params, const SequenceBatch& batch, Rng& rng);

}  // namespace wmd::training
