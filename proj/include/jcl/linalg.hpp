#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>

namespace jcl {

// Row-major so that a batch is a contiguous block of sample rows.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Divides each row by its L2 norm in place and returns the norms.
Vector normalize_rows(Matrix& m);

// True when every row has norm 1 within tol.
bool rows_unit_norm(const Matrix& m, double tol);

// Gathers rows by index.
Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows);

// 64-bit FNV-1a over the raw bytes of the values. Used to detect parameter changes.
std::uint64_t hash_values(std::span<const double> values, std::uint64_t seed = 1469598103934665603ULL);

}  // namespace jcl
