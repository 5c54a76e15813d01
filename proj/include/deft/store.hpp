#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deft/adapters.hpp"
#include "deft/matrix.hpp"

namespace deft {

using Bytes = std::vector<unsigned char>;
using Digest = std::array<unsigned char, 32>;

Digest sha256(std::span<const unsigned char> bytes);
std::string to_hex(const Digest& digest);

// MAT1 (all integers and floats little-endian):
//   "MAT1" | rows u64 | cols u64 | rows·cols f64, row-major
// Total length is exactly 20 + 8·rows·cols bytes.
Bytes encode_matrix(const Matrix& m);
Matrix decode_matrix(std::span<const unsigned char> bytes);

void save_matrix(const Matrix& m, const std::filesystem::path& path);
Matrix load_matrix(const std::filesystem::path& path);

/// SHA-256 of the MAT1 encoding; pairs checkpoints with their base weight.
Digest matrix_hash(const Matrix& w0);

// ADPT1:
//   "ADPT1" | method u8 (0 lora, 1 para, 2 deft) | backend u8 (BackendKind)
//   | rank u64 | alpha f64 | W₀ hash 32 bytes | section count u64
//   | sections: name length u64 | name bytes | embedded MAT1
// Trainable sections: lora_a, lora_b (LoRA); latent (PaRa); latent, coeff
// (DEFT). NMF-backed states also carry nmf_w and nmf_h, the cached factors.
Bytes encode_adapter(const AdapterState& state);
AdapterState decode_adapter(std::span<const unsigned char> bytes, std::shared_ptr<const Matrix> w0);

void save_adapter(const AdapterState& state, const std::filesystem::path& path);
AdapterState load_adapter(const std::filesystem::path& path, std::shared_ptr<const Matrix> w0);

// Config files: UTF-8, one `key = value` per line, '#' starts a comment.
// Keys: method, rank, alpha, backend, lr_p, lr_r, init_stddev, seed,
//       nmf_iters, nmf_tol, nmf_warm_iters.
// Unknown or repeated keys are errors. Missing keys take default_config()
// values for the method.
AdapterConfig parse_config(std::string_view text);
AdapterConfig load_config(const std::filesystem::path& path);
std::string format_config(const AdapterConfig& cfg);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace deft
