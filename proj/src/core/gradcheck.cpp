// SPDX-License-Identifier: Apache-2.0
#include "wmd/core/gradcheck.hpp"

#include "wmd/core/errors.hpp"

#include <algorithm>
#include <cmath>

namespace wmd {

ParameterSet finite_difference_gradient(const ParameterSet& at, const ScalarFunction& f, double step) {
  ParameterSet probe = at;
  ParameterSet out = at.zeros_like();
  for (auto& [name, m] : probe) {
    Matrix& g = out.at(name);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double original = m.data()[i];
      m.data()[i] = original + step;
      const double up = f(probe);
      m.data()[i] = original - step;
      const double down = f(probe);
      m.data()[i] = original;
      g.data()[i] = (up - down) / (2.0 * step);
    }
  }
  return out;
}

double max_relative_error(const ParameterSet& a, const ParameterSet& b, double floor) {
  if (!a.same_layout(b)) throw ShapeError("max_relative_error: layouts differ");
  double worst = 0.0;
  auto it = b.begin();
  for (const auto& [_, m] : a) {
    const Matrix& n = it->second;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double x = m.data()[i], y = n.data()[i];
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
    ++it;
  }
  return worst;
}

}  // namespace wmd
