#include "jcl/linalg.hpp"

#include <cmath>
#include <cstring>

namespace jcl {

Vector normalize_rows(Matrix& m) {
  Vector norms = m.rowwise().norm();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (norms(i) > 0.0) m.row(i) /= norms(i);
  }
  return norms;
}

bool rows_unit_norm(const Matrix& m, double tol) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (std::abs(m.row(i).norm() - 1.0) > tol) return false;
  }
  return true;
}

Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

std::uint64_t hash_values(std::span<const double> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace jcl
