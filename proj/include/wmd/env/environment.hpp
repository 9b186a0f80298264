// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic toy control environments with exact state replay.
//
// Angles use theta = 0 for the upright pole and are reported in (-pi, pi].
// Every environment step integrates `action_repeat` fixed RK4 steps of
// length `dt`; the step reward is the sum of the per-substep rewards.

#include "wmd/core/dense.hpp"
#include "wmd/core/random.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wmd::env {

using PhysicalState = Vector;
using Observation = Vector;
using Action = Vector;

enum class EnvId { pendulum, cartpole };

EnvId parse_env_id(std::string_view name);
std::string to_string(EnvId id);

struct PhysicsConstants {
  double gravity = 9.81;
  // pendulum
  double mass = 1.0;
  double length = 1.0;
  double damping = 0.0;
  double max_torque = 2.0;
  // cartpole (pole_length is the half-length of a uniform rod)
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_length = 0.5;
  double max_force = 10.0;
};

struct EnvConfig {
  EnvId id = EnvId::pendulum;
  int obs_dim = 16;
  double obs_noise = 0.01;
  int action_repeat = 2;
  double dt = 0.01;
  int episode_length = 250;
  std::uint64_t seed = 0;
  PhysicsConstants physics;

  /// Throws ConfigError on an invalid field.
  void validate() const;
};

/// Raised for a physical state outside an environment's validity bounds.
class InvalidStateError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A physically valid start state that the collection policies rarely visit.
struct OodEntry {
  std::string name;
  PhysicalState state;
  std::string description;
};

/// Per-environment physics, reward, scripted controller and metadata.
class Dynamics {
 public:
  virtual ~Dynamics() = default;

  virtual EnvId id() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual std::vector<std::string> component_names() const = 0;
  virtual std::vector<bool> angle_mask() const = 0;
  /// Components the physical decoder does not predict (the forward x-position).
  virtual std::vector<int> excluded_components() const = 0;
  /// Position components compared by the physical discrepancy.
  virtual std::vector<int> position_components() const = 0;

  /// Time derivative of the state under a clipped action in [-1, 1]^m.
  virtual Vector derivative(const PhysicalState& s, const Action& u) const = 0;
  virtual double reward(const PhysicalState& s, const Action& u) const = 0;
  virtual PhysicalState sample_initial(Rng& rng) const = 0;
  /// Throws InvalidStateError naming the violated bound.
  virtual void validate(const PhysicalState& s) const = 0;
  /// Hand-written swing-up controller; output in [-1, 1]^m.
  virtual Action scripted_action(const PhysicalState& s) const = 0;
  virtual std::vector<OodEntry> ood_catalog() const = 0;
  /// Characteristic magnitude per encoded component, used by the observation map.
  virtual Vector feature_scale() const = 0;
};

std::unique_ptr<Dynamics> make_dynamics(const EnvConfig& cfg);

/// Wraps to (-pi, pi]. Idempotent.
double normalize_angle(double theta);
PhysicalState normalize_state(const Dynamics& dyn, PhysicalState s);

/// Angular components become (sin, cos) pairs in place; others pass through.
Vector encode_physical(const Dynamics& dyn, const PhysicalState& s);
/// Inverse of encode_physical; angles via atan2(sin, cos).
PhysicalState decode_physical(const Dynamics& dyn, const Vector& encoded);
int encoded_dim(const Dynamics& dyn);

/// encode_physical without the excluded components: the physical decoder target.
Vector decoder_target(const Dynamics& dyn, const PhysicalState& s);
int decoder_dim(const Dynamics& dyn);
/// State-space reading of a decoder output. Excluded components are set to 0
/// and must not be compared.
PhysicalState state_from_decoder(const Dynamics& dyn, const Vector& decoded);

/// Frozen random 2-layer tanh feature map of the encoded state.
class ObservationMap {
 public:
  ObservationMap(const Dynamics& dyn, int obs_dim, std::uint64_t seed);
  Observation operator()(const Vector& encoded) const;
  int obs_dim() const { return static_cast<int>(out_.cols()); }

 private:
  Vector scale_;
  Matrix hidden_;
  RowVector hidden_bias_;
  Matrix out_;
  RowVector out_bias_;
};

struct StepResult {
  PhysicalState state;
  Observation observation;
  double reward = 0.0;
};

/// One environment step of pure dynamics; shared by step() and replay().
std::pair<PhysicalState, double> advance(const Dynamics& dyn, const EnvConfig& cfg,
                                         const PhysicalState& s, const Action& clipped);

struct ReplayResult {
  std::vector<PhysicalState> states;
  std::vector<double> rewards;
};

/// Ground-truth trajectory of `actions` from `s0`: states[i] and rewards[i]
/// follow actions[i]. Observation noise plays no role.
ReplayResult replay(const EnvConfig& cfg, const PhysicalState& s0, std::span<const Action> actions);

/// Environment surface consumed by data collection and rollouts.
class EnvironmentInterface {
 public:
  virtual ~EnvironmentInterface() = default;
  virtual const EnvConfig& config() const = 0;
  virtual const Dynamics& dynamics() const = 0;
  /// Draws the standard initial-state distribution.
  virtual std::pair<PhysicalState, Observation> reset(Rng& rng) = 0;
  /// Sets the state exactly; `noise` (optional) draws observation noise.
  virtual Observation reset_to_state(const PhysicalState& s, Rng* noise = nullptr) = 0;
  virtual StepResult step(const Action& a, Rng& rng) = 0;
  virtual const PhysicalState& state() const = 0;
};

class Environment : public EnvironmentInterface {
 public:
  explicit Environment(const EnvConfig& cfg);

  const EnvConfig& config() const override { return cfg_; }
  const Dynamics& dynamics() const override { return *dyn_; }
  std::pair<PhysicalState, Observation> reset(Rng& rng) override;
  Observation reset_to_state(const PhysicalState& s, Rng* noise = nullptr) override;
  StepResult step(const Action& a, Rng& rng) override;
  const PhysicalState& state() const override;

  /// Noise-free observation of an arbitrary state.
  Observation observe(const PhysicalState& s) const;
  /// Number of actions that arrived outside [-1, 1] and were clipped.
  long clipped_actions() const { return clipped_; }

 private:
  Observation noisy_observation(const PhysicalState& s, Rng* rng) const;

  EnvConfig cfg_;
  std::shared_ptr<const Dynamics> dyn_;
  ObservationMap obs_map_;
  PhysicalState state_;
  bool initialized_ = false;
  long clipped_ = 0;
};

/// Clips into [-1, 1]^m; returns true when any entry changed.
bool clip_action(Action& a);

}  // namespace wmd::env
