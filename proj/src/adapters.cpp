#include "deft/adapters.hpp"

#include <algorithm>

#include "deft/errors.hpp"
#include "deft/linalg.hpp"
#include "deft/rng.hpp"

namespace deft {

namespace {

bool uses_projection(Method method) { return method != Method::kLora; }

// y − P·(Pᵀ·y), optionally + P·z. Shared by forward and merge so that the
// DEFT-with-R=0 and PaRa paths run the same arithmetic.
Matrix project_out(const Matrix& p, const Matrix& y, const Matrix* z) {
  Matrix out = subtract(y, matmul(p, matmul_tn(p, y)));
  if (z != nullptr) out = add(out, matmul(p, *z));
  return out;
}

}  // namespace

std::string_view method_name(Method method) {
  switch (method) {
    case Method::kLora: return "lora";
    case Method::kPara: return "para";
    case Method::kDeft: return "deft";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kLora, Method::kPara, Method::kDeft}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown adapter method '" + std::string(name) + "'");
}

AdapterConfig default_config(Method method, std::size_t rank) {
  AdapterConfig cfg;
  cfg.method = method;
  cfg.rank = rank;
  cfg.backend.rank = rank;
  cfg.backend.kind = method == Method::kPara ? BackendKind::kQr : BackendKind::kRelax;
  return cfg;
}

void validate_config(const AdapterConfig& cfg, std::size_t m, std::size_t n) {
  if (cfg.rank < 1) throw ConfigError("rank must be at least 1");
  if (cfg.rank > std::min(m, n)) {
    throw ConfigError("rank " + std::to_string(cfg.rank) + " exceeds min(m, n) = " +
                      std::to_string(std::min(m, n)));
  }
  if (!(cfg.effective_alpha() > 0.0)) throw ConfigError("alpha must be positive");
  if (!(cfg.lr_p > 0.0)) throw ConfigError("lr_p must be positive");
  if (!(cfg.lr_r >= cfg.lr_p)) throw ConfigError("lr_r must be at least lr_p");
  if (!(cfg.init_stddev >= 0.0)) throw ConfigError("init_stddev must be non-negative");
  if (uses_projection(cfg.method) && cfg.backend.rank != cfg.rank) {
    throw ConfigError("backend rank must equal adapter rank");
  }
}

AdapterState::AdapterState(std::shared_ptr<const Matrix> w0, AdapterConfig cfg, AdapterParams params)
    : w0_(std::move(w0)), cfg_(std::move(cfg)), params_(std::move(params)) {
  if (!w0_ || w0_->empty()) throw ShapeError("adapter needs a non-empty base weight");
  if (cfg_.rank < 1 || cfg_.rank > std::min(rows(), cols())) {
    throw ConfigError("rank " + std::to_string(cfg_.rank) + " is out of range for a " +
                      w0_->shape_string() + " base weight");
  }
  cfg_.backend.rank = cfg_.rank;
  const std::size_t m = rows(), n = cols(), r = cfg_.rank;
  switch (cfg_.method) {
    case Method::kLora:
      check_shape(params_.lora_a, r, n, "lora_a");
      check_shape(params_.lora_b, m, r, "lora_b");
      break;
    case Method::kPara:
      check_shape(params_.latent, m, r, "latent");
      break;
    case Method::kDeft:
      check_shape(params_.latent, m, r, "latent");
      check_shape(params_.coeff, r, n, "coeff");
      break;
  }
  refresh();
}

void AdapterState::check_shape(const Matrix& value, std::size_t r, std::size_t c,
                               const char* name) const {
  if (value.rows() != r || value.cols() != c) {
    throw ShapeError(std::string(name) + " must be " + std::to_string(r) + "x" + std::to_string(c) +
                     " for method " + std::string(method_name(cfg_.method)) + ", got " +
                     value.shape_string());
  }
}

void AdapterState::set_latent(Matrix latent) {
  if (!uses_projection(cfg_.method)) throw ConfigError("LoRA adapters have no latent");
  check_shape(latent, rows(), cfg_.rank, "latent");
  if (!latent.bit_equal(params_.latent)) stale_ = true;
  params_.latent = std::move(latent);
}

void AdapterState::set_coeff(Matrix coeff) {
  if (cfg_.method != Method::kDeft) throw ConfigError("only DEFT adapters have R");
  check_shape(coeff, cfg_.rank, cols(), "coeff");
  params_.coeff = std::move(coeff);
}

void AdapterState::set_lora_a(Matrix a) {
  if (cfg_.method != Method::kLora) throw ConfigError("only LoRA adapters have A");
  check_shape(a, cfg_.rank, cols(), "lora_a");
  params_.lora_a = std::move(a);
}

void AdapterState::set_lora_b(Matrix b) {
  if (cfg_.method != Method::kLora) throw ConfigError("only LoRA adapters have B");
  check_shape(b, rows(), cfg_.rank, "lora_b");
  params_.lora_b = std::move(b);
}

DecompositionResult AdapterState::compute_factor() const {
  NmfWarmStart warm;
  const NmfWarmStart* warm_ptr = nullptr;
  if (cfg_.backend.kind == BackendKind::kNmf && cache_ && cache_->h_factor) {
    warm.w = cache_->p_factor;
    warm.h = *cache_->h_factor;
    warm_ptr = &warm;
  }
  return decompose(params_.latent, cfg_.backend, warm_ptr);
}

void AdapterState::refresh() {
  if (uses_projection(cfg_.method) && (stale_ || !cache_)) cache_ = compute_factor();
  stale_ = false;
}

DecompositionResult AdapterState::factor() const {
  if (!uses_projection(cfg_.method)) throw ConfigError("LoRA adapters have no projection factor");
  if (!stale_ && cache_) return *cache_;
  return compute_factor();
}

Matrix AdapterState::projection() const { return factor().p_factor; }

void AdapterState::restore_nmf_cache(Matrix w, Matrix h) {
  if (cfg_.backend.kind != BackendKind::kNmf) throw ConfigError("state does not use the NMF backend");
  check_shape(w, rows(), cfg_.rank, "nmf_w");
  check_shape(h, cfg_.rank, cfg_.rank, "nmf_h");
  DecompositionResult restored;
  restored.kind = BackendKind::kNmf;
  restored.p_factor = std::move(w);
  restored.h_factor = std::move(h);
  cache_ = std::move(restored);
  stale_ = false;
}

AdapterState init_adapter(std::shared_ptr<const Matrix> w0, const AdapterConfig& cfg) {
  if (!w0) throw ShapeError("init_adapter: missing base weight");
  validate_config(cfg, w0->rows(), w0->cols());
  const std::size_t m = w0->rows(), n = w0->cols(), r = cfg.rank;
  Rng rng(cfg.seed);
  AdapterParams params;
  switch (cfg.method) {
    case Method::kLora:
      params.lora_a = gaussian(rng, r, n, cfg.init_stddev);
      params.lora_b = Matrix(m, r);
      break;
    case Method::kPara:
      params.latent = gaussian(rng, m, r, cfg.init_stddev);
      break;
    case Method::kDeft:
      params.latent = gaussian(rng, m, r, cfg.init_stddev);
      params.coeff = Matrix(r, n);
      break;
  }
  return AdapterState(std::move(w0), cfg, std::move(params));
}

AdapterState init_adapter(const Matrix& w0, const AdapterConfig& cfg) {
  return init_adapter(std::make_shared<const Matrix>(w0), cfg);
}

Matrix forward(const AdapterState& state, const Matrix& x) {
  if (x.rows() != state.cols()) {
    throw ShapeError("forward: input " + x.shape_string() + " does not match base weight " +
                     state.w0().shape_string());
  }
  const Matrix y = matmul(state.w0(), x);
  const auto& p = state.params();
  switch (state.config().method) {
    case Method::kLora: {
      const double s = state.config().effective_alpha() / static_cast<double>(state.config().rank);
      return add(y, scale(matmul(p.lora_b, matmul(p.lora_a, x)), s));
    }
    case Method::kPara:
      return project_out(state.projection(), y, nullptr);
    case Method::kDeft: {
      const Matrix z = matmul(p.coeff, x);
      return project_out(state.projection(), y, &z);
    }
  }
  throw ConfigError("forward: unknown method");
}

Matrix merge_with_projection(const AdapterState& state, const Matrix& p) {
  if (state.config().method == Method::kLora) {
    throw ConfigError("merge_with_projection: LoRA adapters have no projection factor");
  }
  if (p.rows() != state.rows()) {
    throw ShapeError("merge_with_projection: factor " + p.shape_string() + " does not match " +
                     state.w0().shape_string());
  }
  const Matrix* coeff = state.config().method == Method::kDeft ? &state.params().coeff : nullptr;
  return project_out(p, state.w0(), coeff);
}

Matrix merge(const AdapterState& state) {
  if (state.config().method == Method::kLora) {
    const auto& p = state.params();
    const double s = state.config().effective_alpha() / static_cast<double>(state.config().rank);
    return add(state.w0(), scale(matmul(p.lora_b, p.lora_a), s));
  }
  return merge_with_projection(state, state.projection());
}

std::size_t param_count(const AdapterConfig& cfg, std::size_t m, std::size_t n) {
  switch (cfg.method) {
    case Method::kLora:
    case Method::kDeft:
      return cfg.rank * (m + n);
    case Method::kPara:
      return cfg.rank * m;
  }
  return 0;
}

}  // namespace deft
