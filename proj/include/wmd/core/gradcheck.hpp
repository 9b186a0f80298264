// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "wmd/core/parameters.hpp"

#include <functional>

namespace wmd {

using ScalarFunction = std::function<double(const ParameterSet&)>;

/// Central differences of `f` with respect to every parameter entry. Uses only
/// forward evaluations, so it is independent of the tape's backward rules.
ParameterSet finite_difference_gradient(const ParameterSet& at, const ScalarFunction& f,
                                        double step = 1e-5);

/// max over entries of |a - b| / max(|a|, |b|, floor).
double max_relative_error(const ParameterSet& a, const ParameterSet& b, double floor = 1e-6);

}  // namespace wmd
