#pragma once

#include <cstddef>
#include <initializer_list>

#include "deft/matrix.hpp"

namespace deft {

/// Relative singular-value threshold used by rank decisions unless a caller
/// passes its own.
inline constexpr double kDefaultRankTol = 1e-10;

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);

/// Elementwise max(a, 0).
Matrix relu(const Matrix& a);
/// 1 where a > 0, else 0 (subgradient at exactly 0 is 0).
Matrix relu_mask(const Matrix& a);

/// [a | b | ...] — all blocks must share the row count.
Matrix hcat(std::initializer_list<const Matrix*> blocks);
Matrix hcat(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);

/// ‖a − b‖_F / max(‖b‖_F, tiny); 0 when both are zero.
double relative_error(const Matrix& a, const Matrix& b);

/// Number of singular values strictly greater than tol · σ_max.
/// A zero matrix has rank 0.
std::size_t numerical_rank(const Matrix& a, double tol = kDefaultRankTol);

void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

}  // namespace deft
