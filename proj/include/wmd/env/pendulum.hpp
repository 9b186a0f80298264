// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/env/environment.hpp"

namespace wmd::env {

/// Torque-driven pendulum, state (theta, omega).
class Pendulum final : public Dynamics {
 public:
  explicit Pendulum(const PhysicsConstants& c) : c_(c) {}

  EnvId id() const override { return EnvId::pendulum; }
  int state_dim() const override { return 2; }
  int action_dim() const override { return 1; }
  std::vector<std::string> component_names() const override;
  std::vector<bool> angle_mask() const override { return {true, false}; }
  std::vector<int> excluded_components() const override { return {}; }
  std::vector<int> position_components() const override { return {0}; }

  Vector derivative(const PhysicalState& s, const Action& u) const override;
  double reward(const PhysicalState& s, const Action& u) const override;
  PhysicalState sample_initial(Rng& rng) const override;
  void validate(const PhysicalState& s) const override;
  Action scripted_action(const PhysicalState& s) const override;
  std::vector<OodEntry> ood_catalog() const override;
  Vector feature_scale() const override;

  /// Hamiltonian with the potential measured from the pivot.
  double energy(const PhysicalState& s) const;

 private:
  PhysicsConstants c_;
};

}  // namespace wmd::env
