// SPDX-License-Identifier: Apache-2.0
#include "wmd/training/replay_buffer.hpp"

#include "wmd/core/errors.hpp"

namespace wmd::training {

void Episode::validate() const {
  const std::size_t n = observations.size();
  if (n == 0) throw ShapeError("episode is empty");
  if (actions.size() != n || rewards.size() != n || states.size() != n) {
    throw ShapeError("episode sequences differ in length");
  }
}

ReplayBuffer::ReplayBuffer(std::shared_ptr<const env::Dynamics> dyn) : dyn_(std::move(dyn)) {}

void ReplayBuffer::add(Episode episode) {
  episode.validate();
  if (!episodes_.empty()) {
    const Episode& first = episodes_.front();
    if (episode.observations.front().size() != first.observations.front().size() ||
        episode.actions.front().size() != first.actions.front().size()) {
      throw ShapeError("episode dimensions differ from the buffer");
    }
  }
  Matrix targets(static_cast<Eigen::Index>(episode.size()), env::decoder_dim(*dyn_));
  for (std::size_t t = 0; t < episode.size(); ++t) {
    targets.row(static_cast<Eigen::Index>(t)) = env::decoder_target(*dyn_, episode.states[t]).transpose();
  }
  total_steps_ += episode.size();
  targets_.push_back(std::move(targets));
  episodes_.push_back(std::move(episode));
}

std::size_t ReplayBuffer::window_count(std::size_t length) const {
  std::size_t n = 0;
  for (const auto& e : episodes_) {
    if (e.size() >= length) n += e.size() - length + 1;
  }
  return n;
}

Slice ReplayBuffer::sample_slice(std::size_t length, Rng& rng) const {
  if (length == 0) throw ShapeError("sequence length must be >= 1");
  const std::size_t windows = window_count(length);
  if (windows == 0) throw ShapeError("replay buffer holds no episode of length >= " + std::to_string(length));
  std::size_t k = rng.index(windows);
  for (std::size_t e = 0; e < episodes_.size(); ++e) {
    const std::size_t size = episodes_[e].size();
    if (size < length) continue;
    const std::size_t here = size - length + 1;
    if (k < here) return {e, k};
    k -= here;
  }
  throw ShapeError("sample_slice: internal index overflow");
}

SequenceBatch ReplayBuffer::sample(int batch, int length, Rng& rng) const {
  if (batch < 1) throw ShapeError("batch size must be >= 1");
  std::vector<Slice> slices;
  slices.reserve(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) slices.push_back(sample_slice(static_cast<std::size_t>(length), rng));
  return gather(slices, length);
}

SequenceBatch ReplayBuffer::gather(std::span<const Slice> slices, int length) const {
  if (slices.empty() || length < 1) throw ShapeError("gather: empty request");
  const auto& first = episodes_.at(slices.front().episode);
  const auto B = static_cast<Eigen::Index>(slices.size());
  const auto obs_dim = first.observations.front().size();
  const auto act_dim = first.actions.front().size();
  const auto phys_dim = targets_.front().cols();

  SequenceBatch out;
  out.batch = static_cast<int>(B);
  out.length = length;
  out.slices.assign(slices.begin(), slices.end());
  for (int t = 0; t < length; ++t) {
    Matrix o(B, obs_dim), a(B, act_dim), r(B, 1), s(B, phys_dim);
    for (Eigen::Index b = 0; b < B; ++b) {
      const Slice& sl = slices[static_cast<std::size_t>(b)];
      const Episode& ep = episodes_.at(sl.episode);
      const std::size_t i = sl.start + static_cast<std::size_t>(t);
      if (i >= ep.size()) throw ShapeError("gather: slice crosses the episode end");
      o.row(b) = ep.observations[i].transpose();
      a.row(b) = ep.actions[i].transpose();
      r(b, 0) = ep.rewards[i];
      s.row(b) = targets_[sl.episode].row(static_cast<Eigen::Index>(i));
    }
    out.observations.push_back(std::move(o));
    out.actions.push_back(std::move(a));
    out.rewards.push_back(std::move(r));
    out.physical.push_back(std::move(s));
  }
  return out;
}

const env::PhysicalState& ReplayBuffer::sample_state(Rng& rng) const {
  if (total_steps_ == 0) throw ShapeError("replay buffer is empty");
  std::size_t k = rng.index(total_steps_);
  for (const auto& e : episodes_) {
    if (k < e.size()) return e.states[k];
    k -= e.size();
  }
  throw ShapeError("sample_state: internal index overflow");
}

std::vector<env::PhysicalState> ReplayBuffer::all_states() const {
  std::vector<env::PhysicalState> out;
  out.reserve(total_steps_);
  for (const auto& e : episodes_) out.insert(out.end(), e.states.begin(), e.states.end());
  return out;
}

}  // namespace wmd::training
