// SPDX-License-Identifier: Apache-2.0
#pragma once

// Episodes are stored with a fixed alignment: index t holds the action a_t
// that led into s_t, the observation o_t of s_t, the reward r_t earned by
// that transition, and s_t itself. Index 0 is the reset with a_0 = 0, r_0 = 0.

#include "wmd/core/random.hpp"
#include "wmd/env/environment.hpp"

#include <memory>
#include <span>
#include <vector>

namespace wmd::training {

struct Episode {
  std::vector<env::Observation> observations;
  std::vector<env::Action> actions;
  std::vector<double> rewards;
  std::vector<env::PhysicalState> states;

  std::size_t size() const { return observations.size(); }
  /// Throws ShapeError when the sequences differ in length or are empty.
  void validate() const;
};

/// Location of a subsequence inside the buffer.
struct Slice {
  std::size_t episode = 0;
  std::size_t start = 0;
};

/// B subsequences of L steps; element t of each vector is a B-row matrix.
struct SequenceBatch {
  int batch = 0;
  int length = 0;
  std::vector<Matrix> observations;
  std::vector<Matrix> actions;
  std::vector<Matrix> rewards;   // B x 1
  std::vector<Matrix> physical;  // decoder targets
  std::vector<Slice> slices;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::shared_ptr<const env::Dynamics> dyn);

  void add(Episode episode);
  const std::vector<Episode>& episodes() const { return episodes_; }
  std::size_t total_steps() const { return total_steps_; }
  const env::Dynamics& dynamics() const { return *dyn_; }

  /// Number of length-L windows that stay inside one episode.
  std::size_t window_count(std::size_t length) const;
  /// Uniform over all windows; throws ShapeError when none exists.
  Slice sample_slice(std::size_t length, Rng& rng) const;
  SequenceBatch sample(int batch, int length, Rng& rng) const;
  SequenceBatch gather(std::span<const Slice> slices, int length) const;
  /// Uniform over every stored (episode, index) pair.
  const env::PhysicalState& sample_state(Rng& rng) const;
  /// Every stored state in insertion order.
  std::vector<env::PhysicalState> all_states() const;

 private:
  std::shared_ptr<const env::Dynamics> dyn_;
  std::vector<Episode> episodes_;
  std::vector<Matrix> targets_;  // per episode, rows = steps
  std::size_t total_steps_ = 0;
};

}  // namespace wmd::training
