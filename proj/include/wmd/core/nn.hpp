// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/core/parameters.hpp"
#include "wmd/core/random.hpp"

#include <string>
#include <string_view>

namespace wmd::nn {

enum class Activation { elu, tanh, relu };

Activation parse_activation(std::string_view name);
std::string to_string(Activation act);

ad::Var activate(ad::Var x, Activation act);

/// Positive transform for every learned scale: softplus(raw) + floor.
inline constexpr double kStdFloor = 1e-5;
ad::Var positive(ad::Var raw);
double positive(double raw);

/// `prefix.w` (in x out, Glorot-uniform) and `prefix.b` (1 x out, zeros).
void add_linear(ParameterSet& params, const std::string& prefix, int in, int out, Rng& rng);
ad::Var linear(const BoundParameters& params, std::string_view prefix, ad::Var x);

struct MlpShape {
  int in = 0;
  int hidden = 0;
  int hidden_layers = 0;  ///< number of hidden Linear+activation blocks
  int out = 0;
  bool layer_norm = false;
};

/// Hidden blocks `prefix.l{i}` followed by the output layer
/// `prefix.l{hidden_layers}`. With layer_norm each hidden block is
/// Linear -> LayerNorm(gain `prefix.n{i}.g`, shift `prefix.n{i}.b`) -> act.
void add_mlp(ParameterSet& params, const std::string& prefix, const MlpShape& shape, Rng& rng);
ad::Var mlp(const BoundParameters& params, const std::string& prefix, const MlpShape& shape,
            Activation act, ad::Var x);

}  // namespace wmd::nn
