#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

#include "deft/decompose.hpp"
#include "deft/matrix.hpp"

namespace deft {

enum class Method : std::uint8_t { kLora = 0, kPara = 1, kDeft = 2 };

std::string_view method_name(Method method);  // lora, para, deft
Method parse_method(std::string_view name);

struct AdapterConfig {
  Method method = Method::kDeft;
  std::size_t rank = 4;
  /// LoRA scaling; the update is (alpha / rank)·B·A. Unset means alpha = rank.
  std::optional<double> alpha;
  /// Factorization of the latent (PaRa and DEFT only).
  Backend backend{.kind = BackendKind::kRelax, .rank = 4};
  double lr_p = 1e-3;
  double lr_r = 1e-2;
  double init_stddev = 0.01;
  std::uint64_t seed = 0;

  double effective_alpha() const { return alpha.value_or(static_cast<double>(rank)); }
};

/// Method-appropriate defaults: DEFT relaxes P, PaRa orthonormalizes with QR.
AdapterConfig default_config(Method method, std::size_t rank);

/// Throws ConfigError unless rank ≥ 1, rank ≤ min(m, n), alpha > 0 and lr_r ≥ lr_p > 0.
void validate_config(const AdapterConfig& cfg, std::size_t m, std::size_t n);

/// Trainable matrices. Unused slots stay empty.
///   LoRA: lora_a (r x n), lora_b (m x r)
///   PaRa: latent (m x r)
///   DEFT: latent (m x r), coeff = R (r x n)
struct AdapterParams {
  Matrix latent;
  Matrix coeff;
  Matrix lora_a;
  Matrix lora_b;
};

/// Per-layer adapter over a frozen base weight.
///
/// The base weight is held through a pointer-to-const and never written.
/// The factorization of the latent is cached; any write to the latent marks
/// the cache stale and refresh() recomputes it. Reads on a stale state
/// factorize on the fly without touching the cache, so const access stays
/// re-entrant. NMF refreshes warm-start from the cached factors.
class AdapterState {
 public:
  AdapterState(std::shared_ptr<const Matrix> w0, AdapterConfig cfg, AdapterParams params);

  const Matrix& w0() const noexcept { return *w0_; }
  const std::shared_ptr<const Matrix>& w0_ptr() const noexcept { return w0_; }
  const AdapterConfig& config() const noexcept { return cfg_; }
  const AdapterParams& params() const noexcept { return params_; }
  std::size_t rows() const noexcept { return w0_->rows(); }
  std::size_t cols() const noexcept { return w0_->cols(); }

  void set_latent(Matrix latent);
  void set_coeff(Matrix coeff);
  void set_lora_a(Matrix a);
  void set_lora_b(Matrix b);

  bool stale() const noexcept { return stale_; }
  void refresh();

  /// Factorization of the latent (PaRa / DEFT). Recomputed on the fly when stale.
  DecompositionResult factor() const;
  /// The projection factor P; valid for PaRa and DEFT.
  Matrix projection() const;

  /// Replaces the cached NMF factorization verbatim (checkpoint restore).
  void restore_nmf_cache(Matrix w, Matrix h);

 private:
  void check_shape(const Matrix& value, std::size_t rows, std::size_t cols, const char* name) const;
  DecompositionResult compute_factor() const;

  std::shared_ptr<const Matrix> w0_;
  AdapterConfig cfg_;
  AdapterParams params_;
  std::optional<DecompositionResult> cache_;
  bool stale_ = true;
};

/// LoRA: A ~ N(0, init_stddev²), B = 0. PaRa: latent ~ N(0, init_stddev²).
/// DEFT: latent ~ N(0, init_stddev²), R = 0. init_stddev = 0 gives an exactly
/// zero latent.
AdapterState init_adapter(std::shared_ptr<const Matrix> w0, const AdapterConfig& cfg);
AdapterState init_adapter(const Matrix& w0, const AdapterConfig& cfg);

/// h for a batch x (n x k), one column per sample.
///   LoRA: W₀x + (α/r)·B·A·x
///   PaRa: W₀x − P·Pᵀ·W₀x
///   DEFT: W₀x − P·Pᵀ·W₀x + P·R·x
Matrix forward(const AdapterState& state, const Matrix& x);

/// The explicit weight the adapter implements: forward(s, x) == merge(s)·x.
Matrix merge(const AdapterState& state);

/// merge() with `p` in place of the state's projection factor (PaRa / DEFT).
Matrix merge_with_projection(const AdapterState& state, const Matrix& p);

/// Trainable parameter count: LoRA and DEFT r(m + n), PaRa r·m.
std::size_t param_count(const AdapterConfig& cfg, std::size_t m, std::size_t n);

}  // namespace deft
