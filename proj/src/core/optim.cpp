// SPDX-License-Identifier: Apache-2.0
#include "wmd/core/optim.hpp"

#include "wmd/core/errors.hpp"

#include <cmath>

namespace wmd {

AdamState AdamState::for_parameters(const ParameterSet& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

double clip_global_norm(ParameterSet& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

void adam_update(ParameterSet& params, const ParameterSet& grads, AdamState& state,
                 const AdamConfig& cfg) {
  if (!params.same_layout(grads) || !params.same_layout(state.first_moment)) {
    throw ShapeError("adam_update: parameter, gradient and state layouts differ");
  }
  ++state.steps;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
  auto g = grads.begin();
  auto m = state.first_moment.begin();
  auto v = state.second_moment.begin();
  for (auto p = params.begin(); p != params.end(); ++p, ++g, ++m, ++v) {
    m->second = cfg.beta1 * m->second + (1.0 - cfg.beta1) * g->second;
    v->second = cfg.beta2 * v->second + (1.0 - cfg.beta2) * g->second.cwiseAbs2();
    p->second.array() -= cfg.learning_rate * (m->second.array() / bc1) /
                         ((v->second.array() / bc2).sqrt() + cfg.epsilon);
  }
}

}  // namespace wmd
