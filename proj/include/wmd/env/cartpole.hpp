// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/env/environment.hpp"

namespace wmd::env {

/// Cart-pole swing-up, state (x, theta, x_dot, theta_dot).
class Cartpole final : public Dynamics {
 public:
  explicit Cartpole(const PhysicsConstants& c) : c_(c) {}

  EnvId id() const override { return EnvId::cartpole; }
  int state_dim() const override { return 4; }
  int action_dim() const override { return 1; }
  std::vector<std::string> component_names() const override;
  std::vector<bool> angle_mask() const override { return {false, true, false, false}; }
  std::vector<int> excluded_components() const override { return {0}; }
  std::vector<int> position_components() const override { return {1}; }

  Vector derivative(const PhysicalState& s, const Action& u) const override;
  double reward(const PhysicalState& s, const Action& u) const override;
  PhysicalState sample_initial(Rng& rng) const override;
  void validate(const PhysicalState& s) const override;
  Action scripted_action(const PhysicalState& s) const override;
  std::vector<OodEntry> ood_catalog() const override;
  Vector feature_scale() const override;

  double pole_energy(const PhysicalState& s) const;

 private:
  PhysicsConstants c_;
};

/// Smooth tolerance with bounds (0, 0): 1 at x = 0, `value_at_margin` at |x| = margin.
double tolerance_gaussian(double x, double margin, double value_at_margin = 0.1);
double tolerance_quadratic(double x, double margin);

}  // namespace wmd::env
