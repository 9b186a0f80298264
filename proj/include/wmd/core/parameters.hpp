// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/core/dense.hpp"
#include "wmd/core/tape.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace wmd {

/// Named parameter arrays, iterated in lexicographic name order.
class ParameterSet {
 public:
  using Storage = std::map<std::string, Matrix, std::less<>>;

  /// Throws ShapeError on a duplicate name.
  void add(std::string name, Matrix value);
  const Matrix& at(std::string_view name) const;
  Matrix& at(std::string_view name);
  bool contains(std::string_view name) const { return arrays_.find(name) != arrays_.end(); }

  Storage::const_iterator begin() const { return arrays_.begin(); }
  Storage::const_iterator end() const { return arrays_.end(); }
  Storage::iterator begin() { return arrays_.begin(); }
  Storage::iterator end() { return arrays_.end(); }

  std::size_t array_count() const { return arrays_.size(); }
  /// Total number of scalars.
  std::size_t scalar_count() const;

  /// Same names and shapes, all zeros.
  ParameterSet zeros_like() const;
  bool same_layout(const ParameterSet& other) const;
  double squared_norm() const;
  bool all_finite() const;
  void scale(double s);

  /// Names starting with `prefix`, with the prefix stripped.
  ParameterSet extract(std::string_view prefix) const;
  /// Copies every array of `other` under `prefix` + name.
  void merge(std::string_view prefix, const ParameterSet& other);

  /// FNV-1a over names, shapes and raw value bytes.
  std::uint64_t checksum() const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  Storage arrays_;
};

/// Tape leaves for every array of a ParameterSet. The set must outlive the
/// tape: leaves reference its storage.
class BoundParameters {
 public:
  BoundParameters(ad::Tape& tape, const ParameterSet& params, bool trainable);

  ad::Var operator[](std::string_view name) const;
  ad::Tape& tape() const { return *tape_; }
  const ParameterSet& source() const { return *params_; }

 private:
  ad::Tape* tape_;
  const ParameterSet* params_;
  std::map<std::string, ad::Var, std::less<>> vars_;
};

/// Backpropagates from the 1x1 `loss` and returns a gradient per bound array.
/// Throws ShapeError when `loss` is not scalar.
ParameterSet grad(ad::Tape& tape, ad::Var loss, const BoundParameters& params);

}  // namespace wmd
