// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string_view>

namespace wmd {

/// Row-major dense array carrier. Vectors are stored as Eigen column vectors,
/// batches of vectors as rows of a Matrix.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// Throws NumericError naming `what` when any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
void require_finite(const Vector& v, std::string_view what);

inline Matrix as_row(const Vector& v) { return v.transpose(); }
inline Vector row_of(const Matrix& m, Eigen::Index r) { return m.row(r).transpose(); }

}  // namespace wmd
