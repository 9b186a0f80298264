// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/core/optim.hpp"
#include "wmd/ensemble/ensemble.hpp"
#include "wmd/env/environment.hpp"
#include "wmd/rssm/rssm.hpp"
#include "wmd/training/elbo.hpp"
#include "wmd/training/replay_buffer.hpp"

#include <functional>
#include <iosfwd>
#include <string_view>

namespace wmd::training {

/// random: uniform actions. scripted: the environment's controller on the
/// true state. prior_greedy: the same controller on the state decoded from
/// the model's filtered belief.
enum class PolicyKind { random, scripted, prior_greedy };

PolicyKind parse_policy(std::string_view name);
std::string to_string(PolicyKind kind);

/// Controller output on `view` plus N(0, noise^2), clipped to [-1, 1].
/// The random policy ignores `view` and `noise`.
env::Action policy_action(PolicyKind kind, const env::Dynamics& dyn, const env::PhysicalState& view, double noise,
                          Rng& rng);

struct TrainConfig {
  double learning_rate = 6e-4;
  double grad_clip = 100.0;
  int batch = 50;
  int length = 50;
  int warmup_episodes = 5;
  int collect_every = 100;
  double explore_noise = 0.3;
  long env_steps = 20000;
  bool train_ensembles = true;

  void validate() const;
};

/// Model dimensions that follow from the environment.
rssm::RssmConfig bind_to_env(rssm::RssmConfig cfg, const env::Dynamics& dyn, int obs_dim);

struct TrainState {
  rssm::Rssm model;
  ParameterSet params;
  AdamState opt;
  long step = 0;

  TrainState(rssm::Rssm m, ParameterSet p) : model(std::move(m)), params(std::move(p)),
                                              opt(AdamState::for_parameters(params)) {}
};

struct TrainMetrics {
  long step = 0;
  ElboTerms terms;
  double grad_norm = 0.0;      // after clipping
  double raw_grad_norm = 0.0;  // before clipping
  Matrix transition_inputs;
  Matrix transition_targets;
};

/// One uniform batch, ELBO gradient, global-norm clip, Adam update.
/// Throws NumericError carrying the step on a non-finite loss or gradient.
TrainMetrics train_step(TrainState& state, const ReplayBuffer& buffer, const TrainConfig& cfg, Rng& batch_rng,
                        Rng& latent_rng);

/// Runs one episode of cfg.episode_length stored steps. prior_greedy needs a
/// model and parameters.
Episode collect_episode(env::EnvironmentInterface& env, PolicyKind policy, double noise, Rng& env_rng,
                        Rng& policy_rng, const rssm::Rssm* model = nullptr, const ParameterSet* params = nullptr);

/// `count` random (encoded s_t, a_{t+1}) -> encoded s_{t+1} pairs.
std::pair<Matrix, Matrix> physical_transitions(const ReplayBuffer& buffer, int count, Rng& rng);

struct FitConfig {
  env::EnvConfig env;
  rssm::RssmConfig model;
  TrainConfig train;
  ensemble::EnsembleConfig ensemble;
  std::uint64_t seed = 0;
};

struct LogRow {
  long step = 0;
  ElboTerms terms;
  double grad_norm = 0.0;
};

struct FitResult {
  rssm::Rssm model;
  ParameterSet params;
  ensemble::GaussianEnsemble latent;
  ensemble::GaussianEnsemble physical;
  ReplayBuffer buffer;
  std::vector<LogRow> log;
};

/// Random warm-up episodes, then cycles of collect_every train steps and one
/// scripted episode until the environment-step budget is spent. Ensembles
/// train on the same cadence from detached inputs.
FitResult fit(const FitConfig& cfg, const std::function<void(const LogRow&)>& on_step = {});

void write_training_log(std::ostream& out, const std::vector<LogRow>& rows);
inline constexpr std::string_view kTrainingLogHeader = "step,elbo,recon_o,recon_r,recon_s,kl,grad_norm";

}  // namespace wmd::training
