#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "deft/adapters.hpp"
#include "deft/decompose.hpp"
#include "deft/errors.hpp"
#include "deft/linalg.hpp"
#include "deft/store.hpp"
#include "deft/subspace.hpp"
#include "deft/train.hpp"

namespace py = pybind11;
using deft::Matrix;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw deft::ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::object to_array(const Matrix& m) {
  if (m.empty() && m.rows() == 0 && m.cols() == 0) return py::none();
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return std::move(out);
}

py::dict result_dict(const deft::DecompositionResult& r) {
  py::dict d;
  d["backend"] = std::string(deft::backend_name(r.kind));
  d["p"] = to_array(r.p_factor);
  if (r.r_tri) d["r"] = to_array(*r.r_tri);
  if (!r.singular_values.empty()) d["singular_values"] = r.singular_values;
  if (r.right_vectors) d["v"] = to_array(*r.right_vectors);
  if (r.h_factor) d["h"] = to_array(*r.h_factor);
  if (!r.eigenvalues.empty()) d["eigenvalues"] = r.eigenvalues;
  d["degenerate_columns"] = r.degenerate_columns;
  d["clamped_negative"] = r.clamped_negative;
  d["iterations"] = r.iterations;
  d["error_trace"] = r.error_trace;
  return d;
}

deft::AdapterConfig make_config(const std::string& method, std::size_t rank, const std::string& backend,
                                std::optional<double> alpha, double lr_p, double lr_r, double init_stddev,
                                std::uint64_t seed) {
  deft::AdapterConfig cfg = deft::default_config(deft::parse_method(method), rank);
  if (!backend.empty()) cfg.backend.kind = deft::parse_backend(backend);
  cfg.alpha = alpha;
  cfg.lr_p = lr_p;
  cfg.lr_r = lr_r;
  cfg.init_stddev = init_stddev;
  cfg.seed = seed;
  cfg.backend.seed = seed;
  return cfg;
}

py::bytes to_bytes(const deft::Bytes& b) {
  return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

deft::Bytes from_bytes(const py::bytes& b) {
  const std::string s = b;
  return deft::Bytes(s.begin(), s.end());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "DEFT, LoRA and PaRa low-rank adapters over a frozen base weight";

  auto base = py::register_exception<deft::Error>(m, "DeftError");
  py::register_exception<deft::ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<deft::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<deft::PreconditionError>(m, "PreconditionError", base.ptr());
  auto numeric = py::register_exception<deft::NumericError>(m, "NumericError", base.ptr());
  py::register_exception<deft::DivergenceError>(m, "DivergenceError", numeric.ptr());
  auto io = py::register_exception<deft::IoError>(m, "IoError", base.ptr());
  py::register_exception<deft::FormatError>(m, "FormatError", io.ptr());
  py::register_exception<deft::PairingError>(m, "PairingError", base.ptr());

  m.def("backends", [] {
    std::vector<std::string> out;
    for (auto k : deft::kAllBackends) out.emplace_back(deft::backend_name(k));
    return out;
  });

  m.def(
      "decompose",
      [](const Array& b, const std::string& backend, std::size_t rank, std::uint64_t seed) {
        return result_dict(deft::decompose(to_matrix(b), {.kind = deft::parse_backend(backend), .rank = rank, .seed = seed}));
      },
      py::arg("b"), py::arg("backend"), py::arg("rank"), py::arg("seed") = 0);

  m.def(
      "reconstruction_error",
      [](const Array& b, const std::string& backend, std::size_t rank, std::uint64_t seed) {
        const Matrix mb = to_matrix(b);
        return deft::reconstruction_error(
            mb, deft::decompose(mb, {.kind = deft::parse_backend(backend), .rank = rank, .seed = seed}));
      },
      py::arg("b"), py::arg("backend"), py::arg("rank"), py::arg("seed") = 0);

  m.def(
      "numerical_rank", [](const Array& a, double tol) { return deft::numerical_rank(to_matrix(a), tol); },
      py::arg("a"), py::arg("tol") = deft::kDefaultRankTol);

  m.def(
      "verify_decomposition_identity",
      [](const Array& w, const Array& q) { return deft::verify_decomposition_identity(to_matrix(w), to_matrix(q)); },
      py::arg("w"), py::arg("q"));

  m.def(
      "check_containment",
      [](const Array& w0, const Array& q, const Array& w_total, double tol) {
        const auto rep = deft::check_containment(to_matrix(w0), to_matrix(q), to_matrix(w_total), tol);
        py::dict d;
        d["rank_w0"] = rep.rank_w0;
        d["rank_reduce"] = rep.rank_reduce;
        d["rank_total"] = rep.rank_total;
        d["rank_union"] = rep.rank_union;
        d["rank_union_total"] = rep.rank_union_total;
        d["rank_w0_total"] = rep.rank_w0_total;
        d["containment_holds"] = rep.containment_holds;
        d["extension_holds"] = rep.extension_holds;
        d["residuals"] = rep.residuals;
        return d;
      },
      py::arg("w0"), py::arg("q"), py::arg("w_total"), py::arg("tol") = deft::kDefaultRankTol);

  m.def(
      "param_count",
      [](const std::string& method, std::size_t rank, std::size_t rows, std::size_t cols) {
        return deft::param_count(deft::default_config(deft::parse_method(method), rank), rows, cols);
      },
      py::arg("method"), py::arg("rank"), py::arg("m"), py::arg("n"));

  py::class_<deft::AdapterState>(m, "Adapter")
      .def(py::init([](const Array& w0, const std::string& method, std::size_t rank, const std::string& backend,
                       std::optional<double> alpha, double lr_p, double lr_r, double init_stddev,
                       std::uint64_t seed) {
             auto w = std::make_shared<const Matrix>(to_matrix(w0));
             return deft::init_adapter(w, make_config(method, rank, backend, alpha, lr_p, lr_r, init_stddev, seed));
           }),
           py::arg("w0"), py::arg("method") = "deft", py::arg("rank") = 4, py::arg("backend") = "",
           py::arg("alpha") = py::none(), py::arg("lr_p") = 1e-3, py::arg("lr_r") = 1e-2,
           py::arg("init_stddev") = 0.01, py::arg("seed") = 0)
      .def_property_readonly("method", [](const deft::AdapterState& s) { return std::string(deft::method_name(s.config().method)); })
      .def_property_readonly("backend", [](const deft::AdapterState& s) { return std::string(deft::backend_name(s.config().backend.kind)); })
      .def_property_readonly("rank", [](const deft::AdapterState& s) { return s.config().rank; })
      .def_property_readonly("w0", [](const deft::AdapterState& s) { return to_array(s.w0()); })
      .def_property("latent", [](const deft::AdapterState& s) { return to_array(s.params().latent); },
                    [](deft::AdapterState& s, const Array& v) { s.set_latent(to_matrix(v)); s.refresh(); })
      .def_property("coeff", [](const deft::AdapterState& s) { return to_array(s.params().coeff); },
                    [](deft::AdapterState& s, const Array& v) { s.set_coeff(to_matrix(v)); })
      .def_property("lora_a", [](const deft::AdapterState& s) { return to_array(s.params().lora_a); },
                    [](deft::AdapterState& s, const Array& v) { s.set_lora_a(to_matrix(v)); })
      .def_property("lora_b", [](const deft::AdapterState& s) { return to_array(s.params().lora_b); },
                    [](deft::AdapterState& s, const Array& v) { s.set_lora_b(to_matrix(v)); })
      .def("projection", [](const deft::AdapterState& s) { return to_array(s.projection()); })
      .def("forward", [](const deft::AdapterState& s, const Array& x) { return to_array(deft::forward(s, to_matrix(x))); },
           py::arg("x"))
      .def("merge", [](const deft::AdapterState& s) { return to_array(deft::merge(s)); })
      .def("to_bytes", [](const deft::AdapterState& s) { return to_bytes(deft::encode_adapter(s)); })
      .def_static(
          "from_bytes",
          [](const py::bytes& data, const Array& w0) {
            return deft::decode_adapter(from_bytes(data), std::make_shared<const Matrix>(to_matrix(w0)));
          },
          py::arg("data"), py::arg("w0"))
      .def(
          "finetune",
          [](deft::AdapterState& s, const std::string& task, std::size_t steps, std::uint64_t task_seed) {
            deft::TaskOptions opts;
            opts.seed = task_seed;
            const deft::ToyTask t = task == "teacher-noise" ? deft::make_teacher_noise_task(s.w0(), opts)
                                                            : make_teacher_shift_task(s.w0(), opts);
            const auto rep = deft::run_finetune(s, t, steps);
            py::dict d;
            d["losses"] = rep.losses;
            d["final_loss"] = rep.final_loss;
            d["w0_hash_before"] = rep.w0_hash_before;
            d["w0_hash_after"] = rep.w0_hash_after;
            d["state_hash"] = rep.final_state_hash;
            return d;
          },
          py::arg("task") = "teacher-shift", py::arg("steps") = 100, py::arg("task_seed") = 0);

  m.def("encode_matrix", [](const Array& a) { return to_bytes(deft::encode_matrix(to_matrix(a))); }, py::arg("a"));
  m.def("decode_matrix", [](const py::bytes& b) { return to_array(deft::decode_matrix(from_bytes(b))); },
        py::arg("data"));
  m.def("matrix_hash", [](const Array& a) { return deft::to_hex(deft::matrix_hash(to_matrix(a))); }, py::arg("a"));
}
