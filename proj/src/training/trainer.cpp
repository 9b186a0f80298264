// SPDX-License-Identifier: Apache-2.0
#include "wmd/training/trainer.hpp"

#include "wmd/core/errors.hpp"

#include <algorithm>
#include <iomanip>
#include <optional>
#include <ostream>

namespace wmd::training {

namespace {

enum Stream : std::uint64_t {
  kEnvStream = 1,
  kPolicyStream,
  kBatchStream,
  kLatentStream,
  kEnsembleStream,
  kModelInit,
  kLatentEnsembleInit,
  kPhysicalEnsembleInit,
};

}  // namespace

PolicyKind parse_policy(std::string_view name) {
  if (name == "random") return PolicyKind::random;
  if (name == "scripted") return PolicyKind::scripted;
  if (name == "prior-greedy" || name == "prior_greedy") return PolicyKind::prior_greedy;
  throw ConfigError("unknown policy '" + std::string(name) + "' (expected random, scripted or prior-greedy)");
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::random: return "random";
    case PolicyKind::scripted: return "scripted";
    case PolicyKind::prior_greedy: return "prior-greedy";
  }
  return "random";
}

env::Action policy_action(PolicyKind kind, const env::Dynamics& dyn, const env::PhysicalState& view, double noise,
                          Rng& rng) {
  env::Action a(dyn.action_dim());
  if (kind == PolicyKind::random) {
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(-1.0, 1.0);
    return a;
  }
  a = dyn.scripted_action(view);
  if (noise > 0.0) a += noise * rng.normal_vector(a.size());
  env::clip_action(a);
  return a;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be > 0");
  if (batch < 1 || length < 1) throw ConfigError("train.batch and train.length must be >= 1");
  if (warmup_episodes < 1) throw ConfigError("train.warmup_episodes must be >= 1");
  if (collect_every < 1) throw ConfigError("train.collect_every must be >= 1");
  if (!(explore_noise >= 0.0)) throw ConfigError("train.explore_noise must be >= 0");
  if (env_steps < 0) throw ConfigError("train.env_steps must be >= 0");
}

rssm::RssmConfig bind_to_env(rssm::RssmConfig cfg, const env::Dynamics& dyn, int obs_dim) {
  cfg.obs_dim = obs_dim;
  cfg.action_dim = dyn.action_dim();
  cfg.physical_dim = env::decoder_dim(dyn);
  cfg.validate();
  return cfg;
}

TrainMetrics train_step(TrainState& state, const ReplayBuffer& buffer, const TrainConfig& cfg, Rng& batch_rng,
                        Rng& latent_rng) {
  const SequenceBatch batch = buffer.sample(cfg.batch, cfg.length, batch_rng);
  ad::Tape tape;
  BoundParameters p(tape, state.params, true);
  rssm::LatentSampler sampler(latent_rng);
  ElboGraph g = build_elbo(state.model, p, batch, sampler);
  if (!std::isfinite(g.terms.total)) throw NumericError("ELBO loss is not finite", state.step);
  ParameterSet grads = grad(tape, g.loss, p);
  if (!grads.all_finite()) throw NumericError("ELBO gradient is not finite", state.step);

  TrainMetrics m;
  m.step = state.step;
  m.terms = g.terms;
  m.raw_grad_norm = clip_global_norm(grads, cfg.grad_clip);
  m.grad_norm = std::min(m.raw_grad_norm, cfg.grad_clip);
  adam_update(state.params, grads, state.opt, AdamConfig{cfg.learning_rate});
  if (!state.params.all_finite()) throw NumericError("parameters became non-finite", state.step);
  m.transition_inputs = std::move(g.transition_inputs);
  m.transition_targets = std::move(g.transition_targets);
  ++state.step;
  return m;
}

namespace {

// Posterior-mode filter used by the prior-greedy policy.
class BeliefTracker {
 public:
  BeliefTracker(const rssm::Rssm& model, const ParameterSet& params)
      : model_(model), params_(params), belief_(model.init_belief(params)) {}

  env::PhysicalState view(const env::Dynamics& dyn) const {
    return env::state_from_decoder(dyn, model_.decode_physical(belief_, params_).mean);
  }

  void update(const env::Action& a, const env::Observation& o) {
    belief_.h = model_.transition_prior(belief_, a, params_).first;
    belief_.z = model_.mode(model_.posterior(belief_.h, o, params_));
  }

 private:
  const rssm::Rssm& model_;
  const ParameterSet& params_;
  rssm::BeliefState belief_;
};

}  // namespace

Episode collect_episode(env::EnvironmentInterface& environment, PolicyKind policy, double noise, Rng& env_rng,
                        Rng& policy_rng, const rssm::Rssm* model, const ParameterSet* params) {
  const auto& dyn = environment.dynamics();
  const int length = environment.config().episode_length;
  std::optional<BeliefTracker> tracker;
  if (policy == PolicyKind::prior_greedy) {
    if (model == nullptr || params == nullptr) throw std::invalid_argument("prior-greedy collection needs a model");
    tracker.emplace(*model, *params);
  }

  Episode ep;
  auto [s, o] = environment.reset(env_rng);
  env::Action a = env::Action::Zero(dyn.action_dim());
  double r = 0.0;
  for (int t = 0; t < length; ++t) {
    if (t > 0) {
      const env::PhysicalState view = tracker ? tracker->view(dyn) : environment.state();
      a = policy_action(policy, dyn, view, noise, policy_rng);
      auto step = environment.step(a, env_rng);
      s = step.state;
      o = step.observation;
      r = step.reward;
    }
    ep.observations.push_back(o);
    ep.actions.push_back(a);
    ep.rewards.push_back(r);
    ep.states.push_back(s);
    if (tracker) tracker->update(a, o);
  }
  return ep;
}

std::pair<Matrix, Matrix> physical_transitions(const ReplayBuffer& buffer, int count, Rng& rng) {
  const auto& dyn = buffer.dynamics();
  const int enc = env::encoded_dim(dyn);
  Matrix x(count, enc + dyn.action_dim());
  Matrix y(count, enc);
  for (int i = 0; i < count; ++i) {
    const Slice sl = buffer.sample_slice(2, rng);
    const Episode& ep = buffer.episodes()[sl.episode];
    x.row(i) << env::encode_physical(dyn, ep.states[sl.start]).transpose(), ep.actions[sl.start + 1].transpose();
    y.row(i) = env::encode_physical(dyn, ep.states[sl.start + 1]).transpose();
  }
  return {x, y};
}

FitResult fit(const FitConfig& cfg, const std::function<void(const LogRow&)>& on_step) {
  cfg.env.validate();
  cfg.train.validate();
  cfg.ensemble.validate();

  env::EnvConfig env_cfg = cfg.env;
  env_cfg.seed = cfg.seed;
  env::Environment environment(env_cfg);
  const auto& dyn = environment.dynamics();
  std::shared_ptr<const env::Dynamics> shared_dyn = env::make_dynamics(env_cfg);

  Rng env_rng = Rng::derived(cfg.seed, kEnvStream);
  Rng policy_rng = Rng::derived(cfg.seed, kPolicyStream);
  Rng batch_rng = Rng::derived(cfg.seed, kBatchStream);
  Rng latent_rng = Rng::derived(cfg.seed, kLatentStream);
  Rng ens_rng = Rng::derived(cfg.seed, kEnsembleStream);
  Rng init_rng = Rng::derived(cfg.seed, kModelInit);
  Rng latent_init = Rng::derived(cfg.seed, kLatentEnsembleInit);
  Rng physical_init = Rng::derived(cfg.seed, kPhysicalEnsembleInit);

  rssm::Rssm model(bind_to_env(cfg.model, dyn, env_cfg.obs_dim));
  TrainState state(model, model.init_params(init_rng));
  const auto& mc = model.config();
  auto latent = ensemble::make_latent_ensemble(cfg.ensemble, mc.deter, mc.latent_dim(), mc.action_dim, latent_init);
  auto physical = ensemble::make_physical_ensemble(cfg.ensemble, dyn, physical_init);

  ReplayBuffer buffer(shared_dyn);
  for (int i = 0; i < cfg.train.warmup_episodes; ++i) {
    buffer.add(collect_episode(environment, PolicyKind::random, 0.0, env_rng, policy_rng));
  }
  if (buffer.window_count(static_cast<std::size_t>(cfg.train.length)) == 0 && cfg.train.env_steps > 0) {
    throw ConfigError("train.length exceeds the episode length");
  }

  std::vector<LogRow> log;
  while (static_cast<long>(buffer.total_steps()) < cfg.train.env_steps) {
    for (int i = 0; i < cfg.train.collect_every; ++i) {
      TrainMetrics m = train_step(state, buffer, cfg.train, batch_rng, latent_rng);
      if (cfg.train.train_ensembles) {
        latent.train_step(m.transition_inputs, m.transition_targets, ens_rng);
        auto [x, y] = physical_transitions(buffer, cfg.ensemble.batch, ens_rng);
        physical.train_step(x, y, ens_rng);
      }
      log.push_back({m.step, m.terms, m.grad_norm});
      if (on_step) on_step(log.back());
    }
    buffer.add(collect_episode(environment, PolicyKind::scripted, cfg.train.explore_noise, env_rng, policy_rng));
  }
  return FitResult{std::move(model), std::move(state.params), std::move(latent), std::move(physical),
                   std::move(buffer), std::move(log)};
}

void write_training_log(std::ostream& out, const std::vector<LogRow>& rows) {
  out << kTrainingLogHeader << '\n';
  out << std::fixed << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.step << ',' << r.terms.total << ',' << r.terms.recon_o << ',' << r.terms.recon_r << ','
        << r.terms.recon_s << ',' << r.terms.kl << ',' << r.grad_norm << '\n';
  }
}

}  // namespace wmd::training
