// SPDX-License-Identifier: Apache-2.0
#include "wmd/core/nn.hpp"

#include "wmd/core/errors.hpp"

#include <cmath>

namespace wmd::nn {

Activation parse_activation(std::string_view name) {
  if (name == "elu") return Activation::elu;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected elu, tanh or relu)");
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "elu";
}

ad::Var activate(ad::Var x, Activation act) {
  switch (act) {
    case Activation::elu: return ad::elu(x);
    case Activation::tanh: return ad::tanh(x);
    case Activation::relu: return ad::relu(x);
  }
  return x;
}

ad::Var positive(ad::Var raw) { return ad::add_scalar(ad::softplus(raw), kStdFloor); }

double positive(double raw) {
  return std::max(raw, 0.0) + std::log1p(std::exp(-std::abs(raw))) + kStdFloor;
}

void add_linear(ParameterSet& params, const std::string& prefix, int in, int out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(in, out);
  for (int r = 0; r < in; ++r)
    for (int c = 0; c < out; ++c) w(r, c) = rng.uniform(-limit, limit);
  params.add(prefix + ".w", std::move(w));
  params.add(prefix + ".b", Matrix::Zero(1, out));
}

ad::Var linear(const BoundParameters& params, std::string_view prefix, ad::Var x) {
  const std::string p(prefix);
  return ad::add_row(ad::matmul(x, params[p + ".w"]), params[p + ".b"]);
}

void add_mlp(ParameterSet& params, const std::string& prefix, const MlpShape& shape, Rng& rng) {
  int width = shape.in;
  for (int i = 0; i < shape.hidden_layers; ++i) {
    add_linear(params, prefix + ".l" + std::to_string(i), width, shape.hidden, rng);
    if (shape.layer_norm) {
      params.add(prefix + ".n" + std::to_string(i) + ".g", Matrix::Ones(1, shape.hidden));
      params.add(prefix + ".n" + std::to_string(i) + ".b", Matrix::Zero(1, shape.hidden));
    }
    width = shape.hidden;
  }
  add_linear(params, prefix + ".l" + std::to_string(shape.hidden_layers), width, shape.out, rng);
}

ad::Var mlp(const BoundParameters& params, const std::string& prefix, const MlpShape& shape,
            Activation act, ad::Var x) {
  for (int i = 0; i < shape.hidden_layers; ++i) {
    x = linear(params, prefix + ".l" + std::to_string(i), x);
    if (shape.layer_norm) {
      const std::string n = prefix + ".n" + std::to_string(i);
      x = ad::add_row(ad::mul_row(ad::layer_norm(x), params[n + ".g"]), params[n + ".b"]);
    }
    x = activate(x, act);
  }
  return linear(params, prefix + ".l" + std::to_string(shape.hidden_layers), x);
}

}  // namespace wmd::nn
