// SPDX-License-Identifier: Apache-2.0
#pragma once

// Recurrent state-space model with a Gaussian or a categorical stochastic
// state. The graph functions work on batches (one row per sequence) and are
// shared by training and by the single-belief value API below.

#include "wmd/core/distributions.hpp"
#include "wmd/core/nn.hpp"
#include "wmd/core/parameters.hpp"
#include "wmd/core/random.hpp"

#include <string>
#include <variant>
#include <vector>

namespace wmd::rssm {

enum class Variant { gaussian, categorical };

Variant parse_variant(std::string_view name);
std::string to_string(Variant v);

struct RssmConfig {
  Variant variant = Variant::gaussian;
  int stoch = 30;     // gaussian stochastic size
  int groups = 32;    // categorical K
  int classes = 32;   // categorical C
  int deter = 200;
  int hidden = 300;
  int layers = 3;     // hidden layers of the encoder and decoders
  nn::Activation activation = nn::Activation::elu;

  // set from the environment
  int obs_dim = 16;
  int action_dim = 1;
  int physical_dim = 3;

  void validate() const;
  /// Width of z: stoch, or groups * classes (one-hot rows flattened).
  int latent_dim() const;
  /// Width of the distribution statistics row: [mean | std] or logits.
  int stats_dim() const;
  int feature_dim() const { return deter + latent_dim(); }
};

struct BeliefState {
  Vector h;
  Vector z;
};

using LatentDist = std::variant<DiagonalGaussian, CategoricalLatent>;

/// Draws recorded during a forward pass, replayable for finite differences.
struct LatentNoise {
  std::vector<Matrix> eps;         // gaussian: standard normal draws
  std::vector<Matrix> one_hot;     // categorical: sampled one-hots
  std::vector<Matrix> base_probs;  // categorical: probabilities at sampling time
};

/// Source of stochastic-state samples for the graph.
///
/// Fresh mode draws from an Rng and records the draws. Frozen mode replays a
/// recording; categorical samples become probs + const(one_hot - base_probs),
/// equal to the recorded one-hot at the recording parameters and smooth in
/// the parameters with the straight-through gradient.
class LatentSampler {
 public:
  explicit LatentSampler(Rng& rng) : rng_(&rng) {}
  static LatentSampler frozen(const LatentNoise& noise);

  ad::Var sample(const RssmConfig& cfg, ad::Var stats);
  const LatentNoise& recorded() const { return recorded_; }

 private:
  LatentSampler() = default;

  Rng* rng_ = nullptr;
  const LatentNoise* replay_ = nullptr;
  std::size_t cursor_ = 0;
  LatentNoise recorded_;
};

class Rssm {
 public:
  explicit Rssm(RssmConfig cfg);
  const RssmConfig& config() const { return cfg_; }

  /// Names are local (gru.*, prior.*, posterior.*, encoder.*, decoder.*).
  ParameterSet init_params(Rng& rng) const;

  // ---- graph level, batched ----
  ad::Var recurrent(const BoundParameters& p, ad::Var h, ad::Var z, ad::Var a) const;
  ad::Var prior_stats(const BoundParameters& p, ad::Var h) const;
  ad::Var posterior_stats(const BoundParameters& p, ad::Var h, ad::Var obs) const;
  /// Row-wise KL(posterior || prior), n x 1.
  ad::Var kl(ad::Var post_stats, ad::Var prior_stats) const;
  ad::Var features(ad::Var h, ad::Var z) const;
  ad::Var decode_observation(const BoundParameters& p, ad::Var features) const;
  ad::Var decode_reward(const BoundParameters& p, ad::Var features) const;
  ad::Var decode_physical(const BoundParameters& p, ad::Var features) const;
  /// Deterministic z: Gaussian mean or categorical mode.
  Matrix mode(const Matrix& stats) const;

  // ---- value level, single belief ----
  /// h = 0 and z from the prior at h = 0; the mode when `rng` is null.
  BeliefState init_belief(const ParameterSet& params, Rng* rng = nullptr) const;
  std::pair<Vector, LatentDist> transition_prior(const BeliefState& b, const Vector& action,
                                                 const ParameterSet& params) const;
  LatentDist posterior(const Vector& h, const Vector& obs, const ParameterSet& params) const;
  DiagonalGaussian decode_observation(const BeliefState& b, const ParameterSet& params) const;
  DiagonalGaussian decode_reward(const BeliefState& b, const ParameterSet& params) const;
  DiagonalGaussian decode_physical(const BeliefState& b, const ParameterSet& params) const;

  LatentDist distribution(const Vector& stats_row) const;
  Vector sample(const LatentDist& dist, Rng& rng) const;
  Vector mode(const LatentDist& dist) const;
  double kl(const LatentDist& p, const LatentDist& q) const;

 private:
  nn::MlpShape prior_shape() const;
  nn::MlpShape posterior_shape() const;
  nn::MlpShape encoder_shape() const;
  nn::MlpShape decoder_shape(int out) const;
  DiagonalGaussian decode_unit(const BeliefState& b, const ParameterSet& params, int which) const;

  RssmConfig cfg_;
};

}  // namespace wmd::rssm
