// SPDX-License-Identifier: Apache-2.0
#include "wmd/env/pendulum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace wmd::env {

namespace {
constexpr double kMaxSpeed = 40.0;
}

std::vector<std::string> Pendulum::component_names() const { return {"theta", "omega"}; }

Vector Pendulum::derivative(const PhysicalState& s, const Action& u) const {
  const auto& p = c_;
  const double inertia = p.mass * p.length * p.length;
  Vector d(2);
  d[0] = s[1];
  d[1] = (p.gravity / p.length) * std::sin(s[0]) +
         (u[0] * p.max_torque - p.damping * s[1]) / inertia;
  return d;
}

double Pendulum::reward(const PhysicalState& s, const Action&) const {
  return 0.5 * (1.0 + std::cos(s[0]));
}

PhysicalState Pendulum::sample_initial(Rng& rng) const {
  PhysicalState s(2);
  // uniform on (-pi, pi]
  s[0] = std::numbers::pi - 2.0 * std::numbers::pi * rng.uniform();
  s[1] = 0.05 * rng.normal();
  return s;
}

void Pendulum::validate(const PhysicalState& s) const {
  if (s.size() != 2) throw InvalidStateError("pendulum state needs 2 components");
  const char* names[] = {"theta", "omega"};
  for (int i = 0; i < 2; ++i) {
    if (!std::isfinite(s[i])) {
      std::ostringstream msg;
      msg << "pendulum component '" << names[i] << "' is not finite";
      throw InvalidStateError(msg.str());
    }
  }
  if (std::abs(s[1]) > kMaxSpeed) {
    std::ostringstream msg;
    msg << "pendulum component 'omega' = " << s[1] << " exceeds |omega| <= " << kMaxSpeed;
    throw InvalidStateError(msg.str());
  }
}

double Pendulum::energy(const PhysicalState& s) const {
  const auto& p = c_;
  return 0.5 * p.mass * p.length * p.length * s[1] * s[1] + p.mass * p.gravity * p.length * std::cos(s[0]);
}

Action Pendulum::scripted_action(const PhysicalState& s) const {
  const auto& p = c_;
  const double theta = normalize_angle(s[0]);
  double torque = 0.0;
  if (std::abs(theta) < 0.6 && std::abs(s[1]) < 4.0) {
    torque = -(25.0 * theta + 6.0 * s[1]);
  } else {
    // pump toward the upright energy level
    const double deficit = energy(s) - p.mass * p.gravity * p.length;
    torque = -3.0 * deficit * s[1];
  }
  Action a(1);
  a[0] = std::clamp(torque / p.max_torque, -1.0, 1.0);
  return a;
}

std::vector<OodEntry> Pendulum::ood_catalog() const {
  PhysicalState s(2);
  s << std::numbers::pi, 8.0;
  return {{"hanging_fast", s, "hanging at the bottom while spinning at +8 rad/s"}};
}

Vector Pendulum::feature_scale() const {
  Vector v(3);
  v << 1.0, 1.0, 6.0;
  return v;
}

}  // namespace wmd::env
