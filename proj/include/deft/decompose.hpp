#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deft/matrix.hpp"

namespace deft {

/// Factorization used to turn a trainable latent B (m x r) into the
/// projection factor P that enters W₀ − PPᵀW₀ + PR.
enum class BackendKind : std::uint8_t {
  kQr = 0,
  kTsvd = 1,
  kLrmf = 2,
  kNmf = 3,
  kEig = 4,
  kRelax = 5,
  kRelaxNmf = 6,
};

inline constexpr BackendKind kAllBackends[] = {
    BackendKind::kQr,  BackendKind::kTsvd,  BackendKind::kLrmf,    BackendKind::kNmf,
    BackendKind::kEig, BackendKind::kRelax, BackendKind::kRelaxNmf,
};

/// CLI spelling: qr, tsvd, lrmf, nmf, eig, relax, relax-nmf.
std::string_view backend_name(BackendKind kind);
BackendKind parse_backend(std::string_view name);

/// True for backends whose p_factor has orthonormal columns.
bool is_orthonormal_backend(BackendKind kind);

struct Backend {
  BackendKind kind = BackendKind::kQr;
  std::size_t rank = 1;
  /// Iteration cap for a cold-started NMF.
  std::size_t nmf_iters = 200;
  /// Relative-improvement stopping threshold for NMF.
  double nmf_tol = 1e-6;
  /// Iteration cap when NMF is warm-started from the previous factors.
  std::size_t nmf_warm_iters = 1;
  /// Seeds the NMF initialization.
  std::uint64_t seed = 0;
};

/// Output of one factorization. Which optional fields are populated depends
/// on the backend:
///   QR        p_factor = Q,            r_tri
///   TSVD      p_factor = U_r,          singular_values, right_vectors
///   LRMF      p_factor = U_r·√S_r,     singular_values, right_vectors
///   NMF       p_factor = W,            h_factor
///   EIG       p_factor = V_r,          eigenvalues (Λ_r)
///   RELAX     p_factor = B
///   RELAX_NMF p_factor = ReLU(B)
struct DecompositionResult {
  BackendKind kind = BackendKind::kQr;
  Matrix p_factor;

  std::optional<Matrix> r_tri;
  std::vector<double> singular_values;
  std::optional<Matrix> right_vectors;
  std::optional<Matrix> h_factor;
  std::vector<double> eigenvalues;

  /// QR: columns whose diagonal pivot vanished and were completed with an
  /// orthonormal direction. LRMF: columns scaled to zero by a zero singular value.
  std::size_t degenerate_columns = 0;
  /// NMF: negative input entries were clamped to zero.
  bool clamped_negative = false;
  /// NMF: multiplicative-update iterations performed.
  std::size_t iterations = 0;
  /// NMF: ‖B⁺ − WH‖_F before the first update and after every update.
  std::vector<double> error_trace;
};

/// Thin SVD a = U·diag(S)·Vᵀ with U m x k, V n x k, k = min(m, n), S non-increasing.
struct SvdResult {
  Matrix u;
  std::vector<double> singular_values;
  Matrix v;
};

/// Symmetric eigendecomposition, eigenvalues non-increasing.
struct EigResult {
  std::vector<double> values;
  Matrix vectors;
};

/// One-sided (Hestenes) Jacobi SVD. Zero singular values get completed,
/// orthonormal U / V columns. Each U column has its largest-magnitude
/// entry non-negative (V follows so the product is unchanged).
SvdResult full_svd_oracle(const Matrix& a);

/// Cyclic Jacobi eigensolver for a symmetric matrix.
EigResult symmetric_eigen(const Matrix& s);

/// Householder QR of an m x r matrix, m ≥ r.
DecompositionResult qr_decompose(const Matrix& b);

DecompositionResult truncated_svd(const Matrix& b, std::size_t r);

DecompositionResult lrmf_decompose(const Matrix& b, std::size_t r);

/// NMF factors from a previous call, used to warm-start the next one.
struct NmfWarmStart {
  Matrix w;
  Matrix h;
};

/// Lee–Seung multiplicative updates for min ‖B⁺ − WH‖_F, B⁺ = max(B, 0).
/// Without a warm start the factors are seeded uniform(0, 1) scaled by
/// √(mean(B⁺)/r) and at most `iters` updates run; with one, at most
/// `warm_iters`. Stops early when the relative improvement drops below tol.
DecompositionResult nmf_decompose(const Matrix& b, std::size_t r, std::size_t iters = 200,
                                  double tol = 1e-6, std::uint64_t seed = 0,
                                  const NmfWarmStart* warm = nullptr, std::size_t warm_iters = 1);

/// Top-r eigenvectors of BBᵀ.
DecompositionResult eig_project(const Matrix& b, std::size_t r);

DecompositionResult relax(const Matrix& b, bool nonneg);

/// Dispatch on backend.kind. QR and the relaxed backends use the first
/// backend.rank columns of b; the others factorize all of b at that rank.
DecompositionResult decompose(const Matrix& b, const Backend& backend,
                              const NmfWarmStart* warm = nullptr);

/// The rank-r approximation of b that a result implies: Q·Qᵀb for QR,
/// U_r·S_r·V_rᵀ for TSVD/LRMF, W·H for NMF, V_r·V_rᵀ·b for EIG, and the
/// orthogonal projection of b onto col(p_factor) for the relaxed backends.
Matrix low_rank_approximation(const Matrix& b, const DecompositionResult& result);

/// ‖b − low_rank_approximation(b, result)‖_F / ‖b‖_F (0 for a zero b).
double reconstruction_error(const Matrix& b, const DecompositionResult& result);

}  // namespace deft
