// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/env/environment.hpp"

#include <vector>

namespace wmd::oracle {

// Counts every observation handed out and remembers the step index of each.
class CountingEnvironment : public env::EnvironmentInterface {
 public:
  explicit CountingEnvironment(const env::EnvConfig& cfg) : inner_(cfg) {}

  const env::EnvConfig& config() const override { return inner_.config(); }
  const env::Dynamics& dynamics() const override { return inner_.dynamics(); }
  std::pair<env::PhysicalState, env::Observation> reset(Rng& rng) override {
    reads.push_back(0);
    return inner_.reset(rng);
  }
  env::Observation reset_to_state(const env::PhysicalState& s, Rng* noise) override {
    reads.assign(1, 0);
    states.assign(1, s);
    return inner_.reset_to_state(s, noise);
  }
  env::StepResult step(const env::Action& a, Rng& rng) override {
    reads.push_back(static_cast<int>(reads.size()));
    auto r = inner_.step(a, rng);
    states.push_back(r.state);
    return r;
  }
  const env::PhysicalState& state() const override { return inner_.state(); }

  std::vector<int> reads;
  std::vector<env::PhysicalState> states;

 private:
  env::Environment inner_;
};

}  // namespace wmd::oracle
