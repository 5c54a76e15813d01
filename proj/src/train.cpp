#include "deft/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>

#include "deft/errors.hpp"
#include "deft/linalg.hpp"
#include "deft/rng.hpp"
#include "deft/store.hpp"

namespace deft {

namespace {

Matrix rank_shift(const Matrix& w0, const TaskOptions& opts, Rng& rng) {
  Matrix shift(w0.rows(), w0.cols());
  for (std::size_t t = 0; t < opts.shift_rank; ++t) {
    Matrix u = gaussian(rng, w0.rows(), 1, 1.0);
    Matrix v = gaussian(rng, w0.cols(), 1, 1.0);
    u = scale(u, 1.0 / frobenius_norm(u));
    v = scale(v, 1.0 / frobenius_norm(v));
    shift = add(shift, scale(matmul_nt(u, v), opts.shift_scale));
  }
  return shift;
}

ToyTask build_task(const Matrix& w0, const TaskOptions& opts, double noise) {
  if (opts.batch < 1) throw ConfigError("task batch must be at least 1");
  Rng rng(opts.seed);
  ToyTask task;
  task.teacher = add(w0, rank_shift(w0, opts, rng));
  task.inputs = gaussian(rng, w0.cols(), opts.batch, opts.input_scale);
  task.targets = matmul(task.teacher, task.inputs);
  task.noise_stddev = noise;
  if (noise > 0.0) task.targets = add(task.targets, gaussian(rng, w0.rows(), opts.batch, noise));
  return task;
}

// Visits the slots a method trains, in a fixed order.
void for_each_slot(Method method, const std::function<void(Matrix AdapterParams::*)>& fn) {
  switch (method) {
    case Method::kLora:
      fn(&AdapterParams::lora_a);
      fn(&AdapterParams::lora_b);
      break;
    case Method::kPara:
      fn(&AdapterParams::latent);
      break;
    case Method::kDeft:
      fn(&AdapterParams::latent);
      fn(&AdapterParams::coeff);
      break;
  }
}

void assign_slot(AdapterState& state, Matrix AdapterParams::*slot, Matrix value) {
  if (slot == &AdapterParams::latent) {
    state.set_latent(std::move(value));
  } else if (slot == &AdapterParams::coeff) {
    state.set_coeff(std::move(value));
  } else if (slot == &AdapterParams::lora_a) {
    state.set_lora_a(std::move(value));
  } else {
    state.set_lora_b(std::move(value));
  }
}

void check_task(const AdapterState& state, const ToyTask& task) {
  if (task.inputs.rows() != state.cols() || task.targets.rows() != state.rows() ||
      task.targets.cols() != task.inputs.cols()) {
    throw ShapeError("task shapes (inputs " + task.inputs.shape_string() + ", targets " +
                     task.targets.shape_string() + ") do not fit base weight " +
                     state.w0().shape_string());
  }
}

}  // namespace

ToyTask make_teacher_shift_task(const Matrix& w0, const TaskOptions& opts) {
  return build_task(w0, opts, opts.noise_stddev);
}

ToyTask make_teacher_noise_task(const Matrix& w0, const TaskOptions& opts) {
  return build_task(w0, opts, opts.noise_stddev > 0.0 ? opts.noise_stddev : 0.05);
}

double loss_mse(const AdapterState& state, const ToyTask& task) {
  check_task(state, task);
  const Matrix h = forward(state, task.inputs);
  double acc = 0.0;
  auto hd = h.data();
  auto td = task.targets.data();
  for (std::size_t i = 0; i < hd.size(); ++i) {
    const double e = hd[i] - td[i];
    acc += e * e;
  }
  return acc / static_cast<double>(h.rows() * h.cols());
}

AdapterParams grad(const AdapterState& state, const ToyTask& task) {
  check_task(state, task);
  const Matrix& x = task.inputs;
  const Matrix h = forward(state, x);
  const double norm = 2.0 / static_cast<double>(h.rows() * h.cols());
  const Matrix g = scale(subtract(h, task.targets), norm);  // ∂L/∂h
  const auto& params = state.params();
  const auto& cfg = state.config();

  AdapterParams out;
  if (cfg.method == Method::kLora) {
    const double s = cfg.effective_alpha() / static_cast<double>(cfg.rank);
    const Matrix ax = matmul(params.lora_a, x);
    out.lora_b = scale(matmul_nt(g, ax), s);
    out.lora_a = scale(matmul_nt(matmul_tn(params.lora_b, g), x), s);
    return out;
  }

  const Matrix p = state.projection();
  const Matrix y = matmul(state.w0(), x);
  // h = y − P·Pᵀ·y (+ P·R·x):  ∂L/∂P = −G·(yᵀP) − y·(GᵀP) (+ G·(Rx)ᵀ)
  Matrix dp = subtract(scale(matmul(g, matmul_tn(y, p)), -1.0), matmul(y, matmul_tn(g, p)));
  if (cfg.method == Method::kDeft) {
    const Matrix z = matmul(params.coeff, x);
    dp = add(dp, matmul_nt(g, z));
    out.coeff = matmul_nt(matmul_tn(p, g), x);
  }
  if (cfg.backend.kind == BackendKind::kRelaxNmf) dp = hadamard(dp, relu_mask(params.latent));
  out.latent = std::move(dp);
  return out;
}

AdapterParams finite_difference_grad(const AdapterState& state, const ToyTask& task, double h) {
  AdapterState probe = state;
  AdapterParams out;
  for_each_slot(state.config().method, [&](Matrix AdapterParams::*slot) {
    const Matrix base = state.params().*slot;
    Matrix numeric(base.rows(), base.cols());
    for (std::size_t i = 0; i < base.size(); ++i) {
      Matrix plus = base, minus = base;
      plus.data()[i] += h;
      minus.data()[i] -= h;
      assign_slot(probe, slot, plus);
      const double lp = loss_mse(probe, task);
      assign_slot(probe, slot, minus);
      const double lm = loss_mse(probe, task);
      numeric.data()[i] = (lp - lm) / (2.0 * h);
    }
    assign_slot(probe, slot, base);
    out.*slot = std::move(numeric);
  });
  return out;
}

GradCheck compare_gradients(const AdapterParams& analytic, const AdapterParams& numeric,
                            double floor) {
  GradCheck out;
  for (auto slot : {&AdapterParams::latent, &AdapterParams::coeff, &AdapterParams::lora_a,
                    &AdapterParams::lora_b}) {
    const Matrix& a = analytic.*slot;
    const Matrix& n = numeric.*slot;
    if (a.empty() && n.empty()) continue;
    require_same_shape(a, n, "compare_gradients");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double av = a.data()[i], nv = n.data()[i];
      const double denom = std::max({std::abs(av), std::abs(nv), floor});
      out.max_relative_deviation = std::max(out.max_relative_deviation, std::abs(av - nv) / denom);
      ++out.coordinates;
    }
  }
  return out;
}

void sgd_step(AdapterState& state, const AdapterParams& grads, const AdapterConfig& cfg) {
  if (!(cfg.lr_p >= 0.0) || !(cfg.lr_r >= cfg.lr_p)) {
    throw PreconditionError("sgd_step: requires lr_r >= lr_p >= 0");
  }
  for_each_slot(state.config().method, [&](Matrix AdapterParams::*slot) {
    const bool fast = slot == &AdapterParams::coeff || slot == &AdapterParams::lora_b;
    const double lr = fast ? cfg.lr_r : cfg.lr_p;
    const Matrix& g = grads.*slot;
    if (lr == 0.0 || g.empty()) return;
    const Matrix& current = state.params().*slot;
    require_same_shape(current, g, "sgd_step");
    Matrix next = current;
    auto nd = next.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < nd.size(); ++i) nd[i] -= lr * gd[i];
    assign_slot(state, slot, std::move(next));
  });
  state.refresh();
}

std::string state_hash(const AdapterState& state) {
  std::vector<unsigned char> bytes;
  for_each_slot(state.config().method, [&](Matrix AdapterParams::*slot) {
    const auto enc = encode_matrix(state.params().*slot);
    bytes.insert(bytes.end(), enc.begin(), enc.end());
  });
  return to_hex(sha256(bytes));
}

TrainReport run_finetune(AdapterState& state, const ToyTask& task, std::size_t steps) {
  if (steps < 1) throw ConfigError("run_finetune: steps must be at least 1");
  check_task(state, task);
  TrainReport rep;
  rep.w0_hash_before = to_hex(matrix_hash(state.w0()));
  state.refresh();
  double last_finite = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    const double loss = loss_mse(state, task);
    if (!std::isfinite(loss)) throw DivergenceError(step, last_finite);
    last_finite = loss;
    const AdapterParams g = grad(state, task);
    const bool lora = state.config().method == Method::kLora;
    rep.losses.push_back(loss);
    rep.grad_norm_p.push_back(frobenius_norm(lora ? g.lora_a : g.latent));
    rep.grad_norm_r.push_back(lora ? frobenius_norm(g.lora_b)
                                   : (g.coeff.empty() ? 0.0 : frobenius_norm(g.coeff)));
    sgd_step(state, g, state.config());
  }
  rep.steps = steps;
  rep.final_loss = loss_mse(state, task);
  if (!std::isfinite(rep.final_loss)) throw DivergenceError(steps, last_finite);
  rep.final_state_hash = state_hash(state);
  rep.w0_hash_after = to_hex(matrix_hash(state.w0()));
  return rep;
}

FinetuneResult run_finetune(std::shared_ptr<const Matrix> w0, const AdapterConfig& cfg,
                            const ToyTask& task, std::size_t steps) {
  AdapterState state = init_adapter(std::move(w0), cfg);
  TrainReport report = run_finetune(state, task, steps);
  return FinetuneResult{std::move(state), std::move(report)};
}

void write_csv(std::ostream& os, const TrainReport& report) {
  os << "step,loss,grad_norm_p,grad_norm_r\n" << std::setprecision(17);
  for (std::size_t i = 0; i < report.losses.size(); ++i) {
    os << i << "," << report.losses[i] << "," << report.grad_norm_p[i] << ","
       << report.grad_norm_r[i] << "\n";
  }
}

}  // namespace deft
