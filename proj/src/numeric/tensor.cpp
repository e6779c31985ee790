#include "fema/numeric/tensor.hpp"

#include "fema/error.hpp"

#include <string>

namespace fema::numeric {

void require_width(const Vector& v, Eigen::Index width, std::string_view what) {
  if (v.size() != width) {
    throw ShapeError(std::string(what) + ": expected width " + std::to_string(width) + ", got " +
                     std::to_string(v.size()));
  }
}

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, std::string_view what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()));
  }
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) throw TrainingError(std::string(what) + ": non-finite value");
}

void require_finite(const Vector& v, std::string_view what) {
  if (!v.allFinite()) throw TrainingError(std::string(what) + ": non-finite value");
}

}  // namespace fema::numeric
