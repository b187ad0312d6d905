#pragma once

#include <Eigen/Dense>

namespace sum {

// Row-major matrices throughout: block serialization (ParamVector, tensor
// files) is row-major, and keeping one layout avoids copy-on-flatten.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace sum
