// SPDX-License-Identifier: Apache-2.0
#include "wmd/rollouts/rollouts.hpp"

#include "wmd/core/distributions.hpp"
#include "wmd/core/errors.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace wmd::rollouts {

RolloutKind parse_kind(std::string_view name) {
  if (name == "prior") return RolloutKind::prior;
  if (name == "posterior") return RolloutKind::posterior;
  if (name == "posterior-informed") return RolloutKind::posterior_informed;
  throw ConfigError("unknown rollout kind '" + std::string(name) + "' (prior, posterior, posterior-informed)");
}

std::string to_string(RolloutKind kind) {
  switch (kind) {
    case RolloutKind::prior: return "prior";
    case RolloutKind::posterior: return "posterior";
    case RolloutKind::posterior_informed: return "posterior-informed";
  }
  return "?";
}

StartSpec StartSpec::parse(std::string_view text) {
  StartSpec s;
  if (text == "buffer-random" || text == "random") {
    s.type = Type::buffer_random;
  } else if (text == "id") {
    s.type = Type::id;
  } else if (text.starts_with("ood:") && text.size() > 4) {
    s.type = Type::ood;
    s.ood_name = std::string(text.substr(4));
  } else {
    throw ConfigError("unknown start '" + std::string(text) + "' (buffer-random, id, ood:<name>)");
  }
  return s;
}

std::string StartSpec::to_string() const {
  switch (type) {
    case Type::buffer_random: return "random";
    case Type::id: return "id";
    case Type::ood: return "ood-" + ood_name;
  }
  return "?";
}

void RolloutSpec::validate() const {
  if (horizon < 1) throw ConfigError("rollout horizon must be >= 1");
  if (warmup < 0 || warmup > horizon) throw ConfigError("rollout warmup must lie in [0, horizon]");
  if (policy == training::PolicyKind::scripted)
    throw ConfigError("rollout policy must be random or prior-greedy; the true state is hidden from rollouts");
  if (!(policy_noise >= 0.0)) throw ConfigError("rollout policy noise must be >= 0");
}

env::PhysicalState resolve_start(const RolloutContext& ctx, const env::Dynamics& dyn, const StartSpec& start,
                                 Rng& rng) {
  switch (start.type) {
    case StartSpec::Type::buffer_random:
      if (ctx.start_pool.empty()) throw std::invalid_argument("buffer-random start needs stored states");
      return ctx.start_pool[rng.index(ctx.start_pool.size())];
    case StartSpec::Type::id:
      if (!ctx.id_state) throw std::invalid_argument("ID start needs a selected ID state");
      return *ctx.id_state;
    case StartSpec::Type::ood: {
      std::string names;
      for (const auto& e : dyn.ood_catalog()) {
        if (e.name == start.ood_name) return e.state;
        names += (names.empty() ? "" : ", ") + e.name;
      }
      throw ConfigError("unknown OOD state '" + start.ood_name + "'; catalog: " + names);
    }
  }
  throw std::logic_error("unreachable start type");
}

namespace {

// Reads every observation through one place so the three kinds consume the
// environment and the noise stream identically.
class Runner {
 public:
  Runner(const RolloutContext& ctx, env::EnvironmentInterface& env, const RolloutSpec& spec,
         const env::PhysicalState& s0)
      : ctx_(ctx), model_(*ctx.model), params_(*ctx.params), env_(env), dyn_(env.dynamics()), spec_(spec),
        obs_rng_(Rng::derived(spec.seed, 1)), latent_rng_(Rng::derived(spec.seed, 2)),
        policy_rng_(Rng::derived(spec.seed, 3)), s0_(s0) {
    spec.validate();
    if (ctx.model == nullptr || ctx.params == nullptr) throw std::invalid_argument("rollout needs a model");
    dyn_.validate(s0);
  }

  LatentTrajectory run() {
    LatentTrajectory traj;
    traj.spec = spec_;
    traj.start = s0_;
    const int T = spec_.horizon;
    const int W = spec_.warmup;
    const bool informed = spec_.kind == RolloutKind::posterior_informed;
    const bool filtering = spec_.kind == RolloutKind::posterior;

    rssm::BeliefState prev = model_.init_belief(params_);
    for (int t = 0; t < T; ++t) {
      TrajectoryStep step;
      step.warmup = t < W;
      step.action = t == 0 ? env::Action::Zero(dyn_.action_dim()) : choose_action(prev);
      auto [h, prior] = model_.transition_prior(prev, step.action, params_);

      if (step.warmup || filtering) {
        const env::Observation o = observe(t, step.action);
        const auto post = model_.posterior(h, o, params_);
        step.belief = {h, model_.sample(post, latent_rng_)};
        step.z_mode = model_.mode(post);
        prev = step.belief;
      } else {
        step.uncertainty = uncertainty(prev, step.action);
        step.belief = {h, model_.sample(prior, latent_rng_)};
        step.z_mode = model_.mode(prior);
        if (informed) {
          if (t + 1 < T) {
            const env::Observation o = observe(t, step.action);
            step.refreshed = rssm::BeliefState{h, model_.sample(model_.posterior(h, o, params_), latent_rng_)};
            prev = *step.refreshed;
          }
        } else {
          prev = step.belief;
        }
      }
      step.reward_pred = model_.decode_reward(step.belief, params_).mean(0);
      step.physical_pred = model_.decode_physical(step.belief, params_).mean;
      traj.steps.push_back(std::move(step));
    }
    return traj;
  }

 private:
  env::Action choose_action(const rssm::BeliefState& b) {
    env::PhysicalState view;
    if (spec_.policy != training::PolicyKind::random)
      view = env::state_from_decoder(dyn_, model_.decode_physical(b, params_).mean);
    return training::policy_action(spec_.policy, dyn_, view, spec_.policy_noise, policy_rng_);
  }

  // o_0 comes from the reset; later observations advance the environment by
  // the action just taken. Steps are never skipped, so t must be contiguous.
  env::Observation observe(int t, const env::Action& a) {
    if (t != next_obs_) throw std::logic_error("rollout observations must be contiguous");
    ++next_obs_;
    if (t == 0) return env_.reset_to_state(s0_, &obs_rng_);
    return env_.step(a, obs_rng_).observation;
  }

  double uncertainty(const rssm::BeliefState& prev, const env::Action& a) const {
    if (ctx_.latent == nullptr) return std::numeric_limits<double>::quiet_NaN();
    const auto members = ctx_.latent->predict(ensemble::latent_input(prev.h, prev.z, a));
    return gjs_uncertainty(members);
  }

  const RolloutContext& ctx_;
  const rssm::Rssm& model_;
  const ParameterSet& params_;
  env::EnvironmentInterface& env_;
  const env::Dynamics& dyn_;
  RolloutSpec spec_;
  Rng obs_rng_;
  Rng latent_rng_;
  Rng policy_rng_;
  env::PhysicalState s0_;
  int next_obs_ = 0;
};

void expect_kind(const RolloutSpec& spec, RolloutKind kind) {
  if (spec.kind != kind)
    throw std::invalid_argument("rollout spec kind is " + to_string(spec.kind) + ", expected " + to_string(kind));
}

}  // namespace

LatentTrajectory rollout(const RolloutContext& ctx, env::EnvironmentInterface& env, const RolloutSpec& spec,
                         const env::PhysicalState& s0) {
  return Runner(ctx, env, spec, s0).run();
}

LatentTrajectory prior_rollout(const RolloutContext& ctx, env::EnvironmentInterface& env, const RolloutSpec& spec,
                               const env::PhysicalState& s0) {
  expect_kind(spec, RolloutKind::prior);
  return rollout(ctx, env, spec, s0);
}

LatentTrajectory posterior_rollout(const RolloutContext& ctx, env::EnvironmentInterface& env,
                                   const RolloutSpec& spec, const env::PhysicalState& s0) {
  expect_kind(spec, RolloutKind::posterior);
  return rollout(ctx, env, spec, s0);
}

LatentTrajectory posterior_informed_rollout(const RolloutContext& ctx, env::EnvironmentInterface& env,
                                            const RolloutSpec& spec, const env::PhysicalState& s0) {
  expect_kind(spec, RolloutKind::posterior_informed);
  return rollout(ctx, env, spec, s0);
}

std::uint64_t rollout_seed(std::uint64_t batch_seed, std::size_t index) {
  return Rng::mix(batch_seed, 0x524f4c4c00000000ULL + index);
}

std::vector<LatentTrajectory> batch_rollouts(const RolloutContext& ctx, const RolloutSpec& spec, std::size_t count,
                                             int workers) {
  if (count < 1) throw std::invalid_argument("batch_rollouts needs count >= 1");
  spec.validate();
  std::vector<LatentTrajectory> out(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto work = [&] {
    env::Environment environment(ctx.env);
    try {
      for (std::size_t i = next++; i < count; i = next++) {
        RolloutSpec s = spec;
        s.seed = rollout_seed(spec.seed, i);
        Rng start_rng = Rng::derived(s.seed, 4);
        const env::PhysicalState s0 = resolve_start(ctx, environment.dynamics(), s.start, start_rng);
        out[i] = rollout(ctx, environment, s, s0);
      }
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
      next = count;
    }
  };

  const std::size_t n = std::min<std::size_t>(std::max(workers, 1), count);
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

env::ReplayResult ground_truth(const env::EnvConfig& cfg, const LatentTrajectory& traj) {
  std::vector<env::Action> actions;
  for (std::size_t t = 1; t < traj.steps.size(); ++t) actions.push_back(traj.steps[t].action);
  env::ReplayResult rep = env::replay(cfg, traj.start, actions);
  rep.states.insert(rep.states.begin(), traj.start);
  rep.rewards.insert(rep.rewards.begin(), 0.0);
  return rep;
}

void write_trajectories_csv(std::ostream& out, const std::vector<LatentTrajectory>& trajs) {
  const std::size_t k = trajs.empty() || trajs[0].steps.empty() ? 0 : trajs[0].steps[0].physical_pred.size();
  out << "rollout_id,t,warmup,uncertainty,reward_pred";
  for (std::size_t j = 0; j < k; ++j) out << ",phys_pred_" << j;
  out << '\n';
  char buf[64];
  auto num = [&](double v) {
    if (std::isnan(v)) return std::string("nan");
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (std::size_t t = 0; t < trajs[i].steps.size(); ++t) {
      const auto& st = trajs[i].steps[t];
      out << i << ',' << t << ',' << (st.warmup ? 1 : 0) << ',' << num(st.uncertainty) << ',' << num(st.reward_pred);
      for (Eigen::Index j = 0; j < st.physical_pred.size(); ++j) out << ',' << num(st.physical_pred(j));
      out << '\n';
    }
  }
}

}  // namespace wmd::rollouts
