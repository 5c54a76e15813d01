#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "deft/adapters.hpp"
#include "deft/matrix.hpp"

namespace deft {

/// Synthetic regression task: fit targets = teacher·inputs (+ noise).
struct ToyTask {
  Matrix teacher;   // m x n
  Matrix inputs;    // n x k
  Matrix targets;   // m x k
  double noise_stddev = 0.0;
};

struct TaskOptions {
  std::size_t batch = 64;
  /// Standard deviation of the input entries.
  double input_scale = 8.0;
  /// Spectral norm of each rank-1 term added to W₀.
  double shift_scale = 2.0;
  std::size_t shift_rank = 1;
  double noise_stddev = 0.0;
  std::uint64_t seed = 0;
};

/// Teacher = W₀ + Σ shift_scale·u_i·v_iᵀ with random unit u_i, v_i; noise-free targets
/// unless noise_stddev > 0.
ToyTask make_teacher_shift_task(const Matrix& w0, const TaskOptions& opts);

/// Same teacher as teacher-shift, targets corrupted by N(0, noise_stddev²)
/// (0.05 when opts.noise_stddev is 0).
ToyTask make_teacher_noise_task(const Matrix& w0, const TaskOptions& opts);

/// (1 / (m·k))·‖forward(state, inputs) − targets‖_F²
double loss_mse(const AdapterState& state, const ToyTask& task);

/// Analytic gradient of loss_mse, in the same slots as AdapterParams.
/// Decomposed backends are trained straight-through: the gradient with
/// respect to P is applied to the latent unchanged. RELAX_NMF masks it with
/// 1[latent > 0].
AdapterParams grad(const AdapterState& state, const ToyTask& task);

/// Central differences of loss_mse over every trainable coordinate.
AdapterParams finite_difference_grad(const AdapterState& state, const ToyTask& task,
                                     double h = 1e-5);

struct GradCheck {
  /// max over coordinates of |a − n| / max(|a|, |n|, floor)
  double max_relative_deviation = 0.0;
  std::size_t coordinates = 0;
};

GradCheck compare_gradients(const AdapterParams& analytic, const AdapterParams& numeric,
                            double floor = 1e-7);

/// latent / lora_a step with lr_p; coeff / lora_b step with lr_r.
void sgd_step(AdapterState& state, const AdapterParams& grads, const AdapterConfig& cfg);

struct TrainReport {
  /// Loss before each step.
  std::vector<double> losses;
  /// ‖∂L/∂latent‖ (LoRA: ‖∂L/∂A‖) per step.
  std::vector<double> grad_norm_p;
  /// ‖∂L/∂R‖ (LoRA: ‖∂L/∂B‖) per step.
  std::vector<double> grad_norm_r;
  std::size_t steps = 0;
  double final_loss = 0.0;
  std::string final_state_hash;
  std::string w0_hash_before;
  std::string w0_hash_after;
};

/// Runs `steps` SGD steps on `state`. Throws DivergenceError on a non-finite loss.
TrainReport run_finetune(AdapterState& state, const ToyTask& task, std::size_t steps);

struct FinetuneResult {
  AdapterState state;
  TrainReport report;
};

FinetuneResult run_finetune(std::shared_ptr<const Matrix> w0, const AdapterConfig& cfg,
                            const ToyTask& task, std::size_t steps);

/// SHA-256 (hex) over the MAT1 encodings of the present trainables, in slot order.
std::string state_hash(const AdapterState& state);

/// CSV: step,loss,grad_norm_p,grad_norm_r
void write_csv(std::ostream& os, const TrainReport& report);

}  // namespace deft
