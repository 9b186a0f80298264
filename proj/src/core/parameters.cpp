// SPDX-License-Identifier: Apache-2.0
#include "wmd/core/parameters.hpp"

#include "wmd/core/errors.hpp"

#include <cstring>

namespace wmd {

void ParameterSet::add(std::string name, Matrix value) {
  if (contains(name)) throw ShapeError("duplicate parameter name: " + name);
  arrays_.emplace(std::move(name), std::move(value));
}

const Matrix& ParameterSet::at(std::string_view name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw ShapeError("unknown parameter: " + std::string(name));
  return it->second;
}

Matrix& ParameterSet::at(std::string_view name) {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw ShapeError("unknown parameter: " + std::string(name));
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, m] : arrays_) n += static_cast<std::size_t>(m.size());
  return n;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& [name, m] : arrays_) out.add(name, Matrix::Zero(m.rows(), m.cols()));
  return out;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (arrays_.size() != other.arrays_.size()) return false;
  auto it = other.arrays_.begin();
  for (const auto& [name, m] : arrays_) {
    if (it->first != name || it->second.rows() != m.rows() || it->second.cols() != m.cols()) return false;
    ++it;
  }
  return true;
}

double ParameterSet::squared_norm() const {
  double s = 0.0;
  for (const auto& [_, m] : arrays_) s += m.squaredNorm();
  return s;
}

bool ParameterSet::all_finite() const {
  for (const auto& [_, m] : arrays_)
    if (!m.allFinite()) return false;
  return true;
}

void ParameterSet::scale(double s) {
  for (auto& [_, m] : arrays_) m *= s;
}

ParameterSet ParameterSet::extract(std::string_view prefix) const {
  ParameterSet out;
  for (const auto& [name, m] : arrays_) {
    if (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0) {
      out.add(name.substr(prefix.size()), m);
    }
  }
  return out;
}

void ParameterSet::merge(std::string_view prefix, const ParameterSet& other) {
  for (const auto& [name, m] : other) add(std::string(prefix) + name, m);
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, m] : arrays_) {
    feed(name.data(), name.size());
    const std::int64_t shape[2] = {m.rows(), m.cols()};
    feed(shape, sizeof(shape));
    feed(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  return h;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (!a.same_layout(b)) return false;
  auto it = b.arrays_.begin();
  for (const auto& [_, m] : a.arrays_) {
    if (std::memcmp(m.data(), it->second.data(), sizeof(double) * static_cast<std::size_t>(m.size())) != 0)
      return false;
    ++it;
  }
  return true;
}

BoundParameters::BoundParameters(ad::Tape& tape, const ParameterSet& params, bool trainable)
    : tape_(&tape), params_(&params) {
  for (const auto& [name, m] : params) {
    vars_.emplace(name, trainable ? tape.parameter(m) : tape.constant_ref(m));
  }
}

ad::Var BoundParameters::operator[](std::string_view name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ShapeError("parameter not bound: " + std::string(name));
  return it->second;
}

ParameterSet grad(ad::Tape& tape, ad::Var loss, const BoundParameters& params) {
  tape.backward(loss);
  ParameterSet out;
  for (const auto& [name, _] : params.source()) out.add(name, tape.gradient(params[name]));
  return out;
}

}  // namespace wmd
