// SPDX-License-Identifier: Apache-2.0
#include "wmd/env/cartpole.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace wmd::env {

namespace {
constexpr double kTrackLimit = 10.0;
constexpr double kMaxCartSpeed = 20.0;
constexpr double kMaxPoleSpeed = 40.0;
}  // namespace

double tolerance_gaussian(double x, double margin, double value_at_margin) {
  if (x == 0.0) return 1.0;
  const double scale = std::sqrt(-2.0 * std::log(value_at_margin));
  const double d = std::abs(x) / margin * scale;
  return std::exp(-0.5 * d * d);
}

double tolerance_quadratic(double x, double margin) {
  const double d = std::abs(x) / margin;
  return d < 1.0 ? 1.0 - d * d : 0.0;
}

std::vector<std::string> Cartpole::component_names() const {
  return {"x", "theta", "x_dot", "theta_dot"};
}

Vector Cartpole::derivative(const PhysicalState& s, const Action& u) const {
  const auto& p = c_;
  const double total = p.cart_mass + p.pole_mass;
  const double pml = p.pole_mass * p.pole_length;
  const double sin_t = std::sin(s[1]);
  const double cos_t = std::cos(s[1]);
  const double force = p.max_force * u[0];

  const double temp = (force + pml * s[3] * s[3] * sin_t) / total;
  const double theta_acc =
      (p.gravity * sin_t - cos_t * temp) /
      (p.pole_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total));
  const double x_acc = temp - pml * theta_acc * cos_t / total;

  Vector d(4);
  d << s[2], s[3], x_acc, theta_acc;
  return d;
}

double Cartpole::reward(const PhysicalState& s, const Action& u) const {
  const double upright = 0.5 * (std::cos(s[1]) + 1.0);
  const double centered = 0.5 * (1.0 + tolerance_gaussian(s[0], 2.0));
  const double small_control = (4.0 + tolerance_quadratic(u[0], 1.0)) / 5.0;
  const double small_velocity = 0.5 * (1.0 + tolerance_gaussian(s[3], 5.0));
  return upright * centered * small_control * small_velocity;
}

PhysicalState Cartpole::sample_initial(Rng& rng) const {
  PhysicalState s(4);
  s[0] = 0.01 * rng.normal();
  s[1] = normalize_angle(std::numbers::pi + 0.01 * rng.normal());
  s[2] = 0.01 * rng.normal();
  s[3] = 0.01 * rng.normal();
  return s;
}

void Cartpole::validate(const PhysicalState& s) const {
  if (s.size() != 4) throw InvalidStateError("cartpole state needs 4 components");
  const auto names = component_names();
  for (int i = 0; i < 4; ++i) {
    if (!std::isfinite(s[i])) {
      throw InvalidStateError("cartpole component '" + names[i] + "' is not finite");
    }
  }
  const double limits[] = {kTrackLimit, 0.0, kMaxCartSpeed, kMaxPoleSpeed};
  for (int i : {0, 2, 3}) {
    if (std::abs(s[i]) > limits[i]) {
      std::ostringstream msg;
      msg << "cartpole component '" << names[i] << "' = " << s[i] << " exceeds |" << names[i]
          << "| <= " << limits[i];
      throw InvalidStateError(msg.str());
    }
  }
}

double Cartpole::pole_energy(const PhysicalState& s) const {
  const auto& p = c_;
  const double inertia = 4.0 / 3.0 * p.pole_mass * p.pole_length * p.pole_length;
  return 0.5 * inertia * s[3] * s[3] + p.pole_mass * p.gravity * p.pole_length * std::cos(s[1]);
}

Action Cartpole::scripted_action(const PhysicalState& s) const {
  const auto& p = c_;
  const double theta = normalize_angle(s[1]);
  double force = 0.0;
  if (std::abs(theta) < 0.5 && std::abs(s[3]) < 5.0) {
    force = 40.0 * theta + 8.0 * s[3] + 1.0 * s[0] + 2.0 * s[2];
  } else {
    const double deficit = pole_energy(s) - p.pole_mass * p.gravity * p.pole_length;
    force = 60.0 * deficit * s[3] * std::cos(theta) - 1.5 * s[0] - 1.5 * s[2];
  }
  Action a(1);
  a[0] = std::clamp(force / p.max_force, -1.0, 1.0);
  return a;
}

std::vector<OodEntry> Cartpole::ood_catalog() const {
  PhysicalState s(4);
  s << 2.0, std::numbers::pi, -2.0, 0.0;
  return {{"offset_sliding", s, "cart at +2 m with the pole down, sliding back at 2 m/s"}};
}

Vector Cartpole::feature_scale() const {
  Vector v(5);
  v << 2.0, 1.0, 1.0, 3.0, 6.0;
  return v;
}

}  // namespace wmd::env
