// SPDX-License-Identifier: Apache-2.0
#pragma once

// Prior, posterior and posterior-informed latent rollouts from a physical
// start state. Observation noise, latent sampling and policy noise use three
// separate streams derived from the rollout seed, so every kind produces the
// same warm-up steps for the same seed.

#include "wmd/ensemble/ensemble.hpp"
#include "wmd/env/environment.hpp"
#include "wmd/rssm/rssm.hpp"
#include "wmd/training/replay_buffer.hpp"
#include "wmd/training/trainer.hpp"

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wmd::rollouts {

enum class RolloutKind { prior, posterior, posterior_informed };

RolloutKind parse_kind(std::string_view name);
std::string to_string(RolloutKind kind);

struct StartSpec {
  enum class Type { buffer_random, id, ood };
  Type type = Type::buffer_random;
  std::string ood_name;  // for Type::ood

  /// "buffer-random", "id" or "ood:<name>".
  static StartSpec parse(std::string_view text);
  std::string to_string() const;
};

struct RolloutSpec {
  RolloutKind kind = RolloutKind::prior;
  int horizon = 50;
  int warmup = 3;
  /// random or prior_greedy; the controller always sees the decoded belief.
  training::PolicyKind policy = training::PolicyKind::prior_greedy;
  double policy_noise = 0.3;
  StartSpec start;
  std::uint64_t seed = 0;

  /// Requires 0 <= warmup <= horizon and horizon >= 1. warmup == horizon is
  /// the all-posterior boundary case.
  void validate() const;
};

struct TrajectoryStep {
  rssm::BeliefState belief;
  Vector z_mode;  // mean (Gaussian) or mode (categorical) of the distribution z was drawn from
  env::Action action;  // a_t, the action leading into step t
  double reward_pred = 0.0;
  Vector physical_pred;  // decoder mean, decoder-target layout
  double uncertainty = std::numeric_limits<double>::quiet_NaN();
  bool warmup = false;
  /// Posterior-informed only: the observation-refreshed belief at t.
  std::optional<rssm::BeliefState> refreshed;
};

struct LatentTrajectory {
  RolloutSpec spec;
  env::PhysicalState start;
  std::vector<TrajectoryStep> steps;

  bool has_uncertainty(std::size_t t) const { return !std::isnan(steps[t].uncertainty); }
};

/// Read-only inputs shared by every rollout.
struct RolloutContext {
  const rssm::Rssm* model = nullptr;
  const ParameterSet* params = nullptr;
  const ensemble::GaussianEnsemble* latent = nullptr;  // optional; enables uncertainty
  env::EnvConfig env;
  std::span<const env::PhysicalState> start_pool;  // for buffer-random starts
  std::optional<env::PhysicalState> id_state;      // for ID starts
};

/// Resolves the start state; buffer-random draws from `rng`.
env::PhysicalState resolve_start(const RolloutContext& ctx, const env::Dynamics& dyn, const StartSpec& start,
                                 Rng& rng);

/// Runs one rollout of spec.kind from `s0` on `env`.
LatentTrajectory rollout(const RolloutContext& ctx, env::EnvironmentInterface& env, const RolloutSpec& spec,
                         const env::PhysicalState& s0);

LatentTrajectory prior_rollout(const RolloutContext& ctx, env::EnvironmentInterface& env, const RolloutSpec& spec,
                               const env::PhysicalState& s0);
LatentTrajectory posterior_rollout(const RolloutContext& ctx, env::EnvironmentInterface& env,
                                   const RolloutSpec& spec, const env::PhysicalState& s0);
LatentTrajectory posterior_informed_rollout(const RolloutContext& ctx, env::EnvironmentInterface& env,
                                            const RolloutSpec& spec, const env::PhysicalState& s0);

/// Seed of rollout `index` within a batch.
std::uint64_t rollout_seed(std::uint64_t batch_seed, std::size_t index);

/// `count` independent rollouts; result order depends only on the index.
std::vector<LatentTrajectory> batch_rollouts(const RolloutContext& ctx, const RolloutSpec& spec, std::size_t count,
                                             int workers = 1);

/// states: [s0] followed by the replay of actions a_1 .. a_{T-1}.
/// rewards: 0 at t = 0 (no action taken yet), then the replayed rewards.
env::ReplayResult ground_truth(const env::EnvConfig& cfg, const LatentTrajectory& traj);

/// Columns: rollout_id,t,warmup,uncertainty,reward_pred,phys_pred_0..phys_pred_{k-1}.
void write_trajectories_csv(std::ostream& out, const std::vector<LatentTrajectory>& trajs);

}  // namespace wmd::rollouts
