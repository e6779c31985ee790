#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace fema {

// Column vectors and column-major matrices. Batched network inputs are laid
// out one sample per column.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace numeric {

/// Throws ShapeError unless `v` has exactly `width` entries.
void require_width(const Vector& v, Eigen::Index width, std::string_view what);

/// Throws ShapeError unless `m` is rows x cols.
void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, std::string_view what);

/// Checked mode: throws TrainingError if any element is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
void require_finite(const Vector& v, std::string_view what);

bool all_finite(const Matrix& m);

}  // namespace numeric
}  // namespace fema
