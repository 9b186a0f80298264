// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/core/parameters.hpp"

namespace wmd {

struct AdamConfig {
  double learning_rate = 6e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ParameterSet first_moment;
  ParameterSet second_moment;
  long steps = 0;

  static AdamState for_parameters(const ParameterSet& params);
};

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(ParameterSet& grads, double max_norm);

void adam_update(ParameterSet& params, const ParameterSet& grads, AdamState& state,
                 const AdamConfig& cfg);

}  // namespace wmd
