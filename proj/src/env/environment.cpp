// SPDX-License-Identifier: Apache-2.0
#include "wmd/env/environment.hpp"

#include "wmd/core/errors.hpp"
#include "wmd/env/cartpole.hpp"
#include "wmd/env/pendulum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace wmd::env {

namespace {
constexpr int kObsHidden = 32;
constexpr std::uint64_t kObsMapStream = 0x6f62735f6d6170ULL;
}  // namespace

EnvId parse_env_id(std::string_view name) {
  if (name == "pendulum") return EnvId::pendulum;
  if (name == "cartpole") return EnvId::cartpole;
  throw ConfigError("unknown environment '" + std::string(name) + "' (expected pendulum or cartpole)");
}

std::string to_string(EnvId id) { return id == EnvId::pendulum ? "pendulum" : "cartpole"; }

void EnvConfig::validate() const {
  if (obs_dim < 1) throw ConfigError("env.obs_dim must be >= 1");
  if (!(obs_noise >= 0.0) || !std::isfinite(obs_noise)) throw ConfigError("env.obs_noise must be >= 0");
  if (action_repeat < 1) throw ConfigError("env.action_repeat must be >= 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("env.dt must be > 0");
  if (episode_length < 2) throw ConfigError("env.episode_length must be >= 2");
  const auto& p = physics;
  for (double v : {p.gravity, p.mass, p.length, p.max_torque, p.cart_mass, p.pole_mass, p.pole_length,
                   p.max_force}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("env physics constants must be positive");
  }
  if (!(p.damping >= 0.0)) throw ConfigError("env.damping must be >= 0");
}

std::unique_ptr<Dynamics> make_dynamics(const EnvConfig& cfg) {
  switch (cfg.id) {
    case EnvId::pendulum:
      return std::make_unique<Pendulum>(cfg.physics);
    case EnvId::cartpole:
      return std::make_unique<Cartpole>(cfg.physics);
  }
  throw ConfigError("unknown environment id");
}

double normalize_angle(double theta) {
  double r = std::remainder(theta, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

PhysicalState normalize_state(const Dynamics& dyn, PhysicalState s) {
  const auto mask = dyn.angle_mask();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) s[static_cast<Eigen::Index>(i)] = normalize_angle(s[static_cast<Eigen::Index>(i)]);
  }
  return s;
}

int encoded_dim(const Dynamics& dyn) {
  const auto mask = dyn.angle_mask();
  return static_cast<int>(mask.size() + std::count(mask.begin(), mask.end(), true));
}

Vector encode_physical(const Dynamics& dyn, const PhysicalState& s) {
  const auto mask = dyn.angle_mask();
  if (s.size() != static_cast<Eigen::Index>(mask.size())) throw ShapeError("encode_physical: state size mismatch");
  Vector out(encoded_dim(dyn));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double v = s[static_cast<Eigen::Index>(i)];
    if (mask[i]) {
      out[k++] = std::sin(v);
      out[k++] = std::cos(v);
    } else {
      out[k++] = v;
    }
  }
  return out;
}

PhysicalState decode_physical(const Dynamics& dyn, const Vector& encoded) {
  const auto mask = dyn.angle_mask();
  if (encoded.size() != encoded_dim(dyn)) throw ShapeError("decode_physical: encoded size mismatch");
  PhysicalState s(static_cast<Eigen::Index>(mask.size()));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      s[static_cast<Eigen::Index>(i)] = std::atan2(encoded[k], encoded[k + 1]);
      k += 2;
    } else {
      s[static_cast<Eigen::Index>(i)] = encoded[k++];
    }
  }
  return s;
}

int decoder_dim(const Dynamics& dyn) {
  const auto mask = dyn.angle_mask();
  int n = encoded_dim(dyn);
  for (int i : dyn.excluded_components()) n -= mask[static_cast<std::size_t>(i)] ? 2 : 1;
  return n;
}

Vector decoder_target(const Dynamics& dyn, const PhysicalState& s) {
  const auto mask = dyn.angle_mask();
  const auto excluded = dyn.excluded_components();
  const Vector full = encode_physical(dyn, s);
  Vector out(decoder_dim(dyn));
  Eigen::Index k = 0, j = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const int width = mask[i] ? 2 : 1;
    const bool skip = std::find(excluded.begin(), excluded.end(), static_cast<int>(i)) != excluded.end();
    for (int w = 0; w < width; ++w, ++k) {
      if (!skip) out[j++] = full[k];
    }
  }
  return out;
}

PhysicalState state_from_decoder(const Dynamics& dyn, const Vector& decoded) {
  const auto mask = dyn.angle_mask();
  const auto excluded = dyn.excluded_components();
  if (decoded.size() != decoder_dim(dyn)) throw ShapeError("state_from_decoder: size mismatch");
  PhysicalState s = PhysicalState::Zero(static_cast<Eigen::Index>(mask.size()));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (std::find(excluded.begin(), excluded.end(), static_cast<int>(i)) != excluded.end()) continue;
    const auto idx = static_cast<Eigen::Index>(i);
    if (mask[i]) {
      s[idx] = std::atan2(decoded[k], decoded[k + 1]);
      k += 2;
    } else {
      s[idx] = decoded[k++];
    }
  }
  return s;
}

ObservationMap::ObservationMap(const Dynamics& dyn, int obs_dim, std::uint64_t seed) {
  Rng rng = Rng::derived(seed, kObsMapStream);
  scale_ = dyn.feature_scale();
  const auto in = scale_.size();
  hidden_ = rng.normal_matrix(in, kObsHidden) * (1.5 / std::sqrt(static_cast<double>(in)));
  hidden_bias_ = rng.normal_matrix(1, kObsHidden) * 0.2;
  out_ = rng.normal_matrix(kObsHidden, obs_dim) * (1.0 / std::sqrt(static_cast<double>(kObsHidden)));
  out_bias_ = rng.normal_matrix(1, obs_dim) * 0.1;
}

Observation ObservationMap::operator()(const Vector& encoded) const {
  if (encoded.size() != scale_.size()) throw ShapeError("observation map: encoded size mismatch");
  const RowVector x = encoded.cwiseQuotient(scale_).transpose();
  const RowVector h = (x * hidden_ + hidden_bias_).array().tanh().matrix();
  return (h * out_ + out_bias_).transpose();
}

bool clip_action(Action& a) {
  bool changed = false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double c = std::clamp(a[i], -1.0, 1.0);
    if (c != a[i]) {
      a[i] = c;
      changed = true;
    }
  }
  return changed;
}

namespace {

Vector rk4(const Dynamics& dyn, const Vector& s, const Action& u, double h) {
  const Vector k1 = dyn.derivative(s, u);
  const Vector k2 = dyn.derivative(s + 0.5 * h * k1, u);
  const Vector k3 = dyn.derivative(s + 0.5 * h * k2, u);
  const Vector k4 = dyn.derivative(s + h * k3, u);
  return s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

std::pair<PhysicalState, double> advance(const Dynamics& dyn, const EnvConfig& cfg, const PhysicalState& s,
                                         const Action& clipped) {
  PhysicalState x = s;
  double reward = 0.0;
  for (int r = 0; r < cfg.action_repeat; ++r) {
    x = normalize_state(dyn, rk4(dyn, x, clipped, cfg.dt));
    reward += dyn.reward(x, clipped);
  }
  if (!x.allFinite()) throw NumericError("environment state became non-finite");
  return {x, reward};
}

ReplayResult replay(const EnvConfig& cfg, const PhysicalState& s0, std::span<const Action> actions) {
  const auto dyn = make_dynamics(cfg);
  dyn->validate(s0);
  ReplayResult out;
  out.states.reserve(actions.size());
  out.rewards.reserve(actions.size());
  PhysicalState s = normalize_state(*dyn, s0);
  for (const Action& a : actions) {
    if (a.size() != dyn->action_dim()) throw ShapeError("replay: action size mismatch");
    Action u = a;
    clip_action(u);
    auto [next, r] = advance(*dyn, cfg, s, u);
    s = next;
    out.states.push_back(s);
    out.rewards.push_back(r);
  }
  return out;
}

Environment::Environment(const EnvConfig& cfg)
    : cfg_((cfg.validate(), cfg)), dyn_(make_dynamics(cfg)), obs_map_(*dyn_, cfg.obs_dim, cfg.seed) {}

Observation Environment::observe(const PhysicalState& s) const { return obs_map_(encode_physical(*dyn_, s)); }

Observation Environment::noisy_observation(const PhysicalState& s, Rng* rng) const {
  Observation o = observe(s);
  if (rng != nullptr && cfg_.obs_noise > 0.0) o += cfg_.obs_noise * rng->normal_vector(o.size());
  return o;
}

std::pair<PhysicalState, Observation> Environment::reset(Rng& rng) {
  state_ = dyn_->sample_initial(rng);
  initialized_ = true;
  return {state_, noisy_observation(state_, &rng)};
}

Observation Environment::reset_to_state(const PhysicalState& s, Rng* noise) {
  dyn_->validate(s);
  state_ = normalize_state(*dyn_, s);
  initialized_ = true;
  return noisy_observation(state_, noise);
}

StepResult Environment::step(const Action& a, Rng& rng) {
  if (!initialized_) throw std::logic_error("environment stepped before reset");
  if (a.size() != dyn_->action_dim()) throw ShapeError("step: action size mismatch");
  Action u = a;
  if (clip_action(u)) ++clipped_;
  auto [next, r] = advance(*dyn_, cfg_, state_, u);
  state_ = next;
  return {state_, noisy_observation(state_, &rng), r};
}

const PhysicalState& Environment::state() const {
  if (!initialized_) throw std::logic_error("environment state read before reset");
  return state_;
}

}  // namespace wmd::env
