// SPDX-License-Identifier: Apache-2.0
#include "wmd/core/dense.hpp"

#include "wmd/core/errors.hpp"

#include <string>

namespace wmd {

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) throw NumericError("non-finite values in " + std::string(what));
}

void require_finite(const Vector& v, std::string_view what) {
  if (!v.allFinite()) throw NumericError("non-finite values in " + std::string(what));
}

}  // namespace wmd
