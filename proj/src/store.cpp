#include "deft/store.hpp"

#include <openssl/evp.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "deft/errors.hpp"

namespace deft {

namespace {

constexpr std::string_view kMatMagic = "MAT1";
constexpr std::string_view kAdapterMagic = "ADPT1";
constexpr std::size_t kMatHeader = 20;

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(Bytes& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::span<const unsigned char> b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

// Bounds-checked cursor over a byte buffer; every read names its field.
class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::span<const unsigned char> take(std::size_t count, const std::string& field) {
    if (remaining() < count) throw TruncatedError(field, pos_ + count, bytes_.size());
    auto out = bytes_.subspan(pos_, count);
    pos_ += count;
    return out;
  }
  std::uint8_t u8(const std::string& field) { return take(1, field)[0]; }
  std::uint64_t u64(const std::string& field) { return get_u64(take(8, field)); }
  double f64(const std::string& field) { return std::bit_cast<double>(u64(field)); }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

// Reads one MAT1 record from the cursor (the embedded form inside ADPT1).
Matrix read_matrix(Reader& rd, const std::string& where) {
  auto magic = rd.take(kMatMagic.size(), where + "magic");
  if (std::memcmp(magic.data(), kMatMagic.data(), kMatMagic.size()) != 0) {
    throw BadMagicError(where + "magic: expected \"MAT1\"");
  }
  const std::uint64_t rows = rd.u64(where + "rows");
  const std::uint64_t cols = rd.u64(where + "cols");
  if (rows != 0 && cols > (std::uint64_t{1} << 60) / rows) {
    throw FormatError(where + "rows/cols: " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " is too large");
  }
  const std::size_t count = static_cast<std::size_t>(rows * cols);
  if (rd.remaining() < 8 * count) {
    throw TruncatedError(where + "data", rd.position() + 8 * count, rd.position() + rd.remaining());
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = rd.f64(where + "data");
  return Matrix(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), std::move(data));
}

void append_matrix(Bytes& out, const Matrix& m) {
  out.insert(out.end(), kMatMagic.begin(), kMatMagic.end());
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (double v : m.data()) put_f64(out, v);
}

std::vector<std::pair<std::string, const Matrix*>> sections_of(const AdapterState& state,
                                                               const DecompositionResult* nmf) {
  const auto& p = state.params();
  std::vector<std::pair<std::string, const Matrix*>> out;
  switch (state.config().method) {
    case Method::kLora:
      out = {{"lora_a", &p.lora_a}, {"lora_b", &p.lora_b}};
      break;
    case Method::kPara:
      out = {{"latent", &p.latent}};
      break;
    case Method::kDeft:
      out = {{"latent", &p.latent}, {"coeff", &p.coeff}};
      break;
  }
  if (nmf != nullptr) {
    out.emplace_back("nmf_w", &nmf->p_factor);
    out.emplace_back("nmf_h", &*nmf->h_factor);
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw FormatError("config: " + key + " = '" + value + "' is not a number");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("config: " + key + " = '" + value + "' is not a non-negative integer");
  }
  return out;
}

}  // namespace

Digest sha256(std::span<const unsigned char> bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw Error("sha256: digest computation failed");
  }
  return out;
}

std::string to_hex(const Digest& digest) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned char c : digest) os << std::setw(2) << static_cast<int>(c);
  return os.str();
}

Bytes encode_matrix(const Matrix& m) {
  Bytes out;
  out.reserve(kMatHeader + 8 * m.size());
  append_matrix(out, m);
  return out;
}

Matrix decode_matrix(std::span<const unsigned char> bytes) {
  Reader rd(bytes);
  Matrix m = read_matrix(rd, "");
  if (rd.remaining() != 0) {
    throw LengthMismatchError("length: file has " + std::to_string(bytes.size()) +
                              " bytes, header declares " + std::to_string(kMatHeader + 8 * m.size()));
  }
  return m;
}

void save_matrix(const Matrix& m, const std::filesystem::path& path) { write_file(path, encode_matrix(m)); }

Matrix load_matrix(const std::filesystem::path& path) { return decode_matrix(read_file(path)); }

Digest matrix_hash(const Matrix& w0) { return sha256(encode_matrix(w0)); }

Bytes encode_adapter(const AdapterState& state) {
  const auto& cfg = state.config();
  std::optional<DecompositionResult> nmf;
  if (cfg.method != Method::kLora && cfg.backend.kind == BackendKind::kNmf) nmf = state.factor();

  Bytes out(kAdapterMagic.begin(), kAdapterMagic.end());
  out.push_back(static_cast<unsigned char>(cfg.method));
  out.push_back(static_cast<unsigned char>(cfg.backend.kind));
  put_u64(out, cfg.rank);
  put_f64(out, cfg.effective_alpha());
  const Digest h = matrix_hash(state.w0());
  out.insert(out.end(), h.begin(), h.end());
  const auto sections = sections_of(state, nmf ? &*nmf : nullptr);
  put_u64(out, sections.size());
  for (const auto& [name, mat] : sections) {
    put_u64(out, name.size());
    out.insert(out.end(), name.begin(), name.end());
    append_matrix(out, *mat);
  }
  return out;
}

AdapterState decode_adapter(std::span<const unsigned char> bytes, std::shared_ptr<const Matrix> w0) {
  if (!w0) throw ShapeError("decode_adapter: missing base weight");
  Reader rd(bytes);
  auto magic = rd.take(kAdapterMagic.size(), "magic");
  if (std::memcmp(magic.data(), kAdapterMagic.data(), kAdapterMagic.size()) != 0) {
    throw BadMagicError("magic: expected \"ADPT1\"");
  }
  const std::uint8_t method_tag = rd.u8("method");
  if (method_tag > static_cast<std::uint8_t>(Method::kDeft)) {
    throw UnsupportedMethodError("method: unsupported adapter method tag " + std::to_string(method_tag));
  }
  const std::uint8_t backend_tag = rd.u8("backend");
  if (backend_tag > static_cast<std::uint8_t>(BackendKind::kRelaxNmf)) {
    throw FormatError("backend: unsupported backend tag " + std::to_string(backend_tag));
  }
  const std::uint64_t rank = rd.u64("rank");
  const double alpha = rd.f64("alpha");
  auto stored_hash = rd.take(32, "w0_hash");

  std::map<std::string, Matrix> sections;
  const std::uint64_t count = rd.u64("section_count");
  for (std::uint64_t s = 0; s < count; ++s) {
    const std::uint64_t name_len = rd.u64("section_name_length");
    if (name_len > rd.remaining()) throw TruncatedError("section_name", rd.position() + name_len, bytes.size());
    auto name_bytes = rd.take(static_cast<std::size_t>(name_len), "section_name");
    std::string name(name_bytes.begin(), name_bytes.end());
    Matrix m = read_matrix(rd, "section '" + name + "' ");
    if (!sections.emplace(name, std::move(m)).second) {
      throw FormatError("section '" + name + "' appears twice");
    }
  }
  if (rd.remaining() != 0) {
    throw LengthMismatchError("length: " + std::to_string(rd.remaining()) + " trailing bytes after last section");
  }

  const Digest actual = matrix_hash(*w0);
  if (std::memcmp(actual.data(), stored_hash.data(), actual.size()) != 0) {
    throw PairingError("checkpoint was trained against a different base weight");
  }

  const auto method = static_cast<Method>(method_tag);
  AdapterConfig cfg = default_config(method, static_cast<std::size_t>(rank));
  cfg.alpha = alpha;
  cfg.backend.kind = static_cast<BackendKind>(backend_tag);

  auto section = [&](const std::string& name) -> Matrix {
    auto it = sections.find(name);
    if (it == sections.end()) throw FormatError("missing section '" + name + "'");
    return it->second;
  };
  AdapterParams params;
  switch (method) {
    case Method::kLora:
      params.lora_a = section("lora_a");
      params.lora_b = section("lora_b");
      break;
    case Method::kPara:
      params.latent = section("latent");
      break;
    case Method::kDeft:
      params.latent = section("latent");
      params.coeff = section("coeff");
      break;
  }
  AdapterState state(std::move(w0), cfg, std::move(params));
  if (method != Method::kLora && cfg.backend.kind == BackendKind::kNmf) {
    state.restore_nmf_cache(section("nmf_w"), section("nmf_h"));
  }
  return state;
}

void save_adapter(const AdapterState& state, const std::filesystem::path& path) {
  write_file(path, encode_adapter(state));
}

AdapterState load_adapter(const std::filesystem::path& path, std::shared_ptr<const Matrix> w0) {
  return decode_adapter(read_file(path), std::move(w0));
}

AdapterConfig parse_config(std::string_view text) {
  static const char* const kKeys[] = {"method", "rank",        "alpha", "backend",
                                      "lr_p",   "lr_r",        "init_stddev",
                                      "seed",   "nmf_iters",   "nmf_tol", "nmf_warm_iters"};
  std::map<std::string, std::string> kv;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) ==
        std::end(kKeys)) {
      throw FormatError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (!kv.emplace(key, value).second) {
      throw FormatError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }

  const Method method = kv.count("method") ? parse_method(kv["method"]) : Method::kDeft;
  const std::size_t rank = kv.count("rank") ? parse_u64("rank", kv["rank"]) : 4;
  AdapterConfig cfg = default_config(method, rank);
  if (kv.count("alpha")) cfg.alpha = parse_double("alpha", kv["alpha"]);
  if (kv.count("backend")) cfg.backend.kind = parse_backend(kv["backend"]);
  if (kv.count("lr_p")) cfg.lr_p = parse_double("lr_p", kv["lr_p"]);
  if (kv.count("lr_r")) cfg.lr_r = parse_double("lr_r", kv["lr_r"]);
  if (kv.count("init_stddev")) cfg.init_stddev = parse_double("init_stddev", kv["init_stddev"]);
  if (kv.count("seed")) cfg.seed = parse_u64("seed", kv["seed"]);
  if (kv.count("nmf_iters")) cfg.backend.nmf_iters = parse_u64("nmf_iters", kv["nmf_iters"]);
  if (kv.count("nmf_tol")) cfg.backend.nmf_tol = parse_double("nmf_tol", kv["nmf_tol"]);
  if (kv.count("nmf_warm_iters")) cfg.backend.nmf_warm_iters = parse_u64("nmf_warm_iters", kv["nmf_warm_iters"]);
  cfg.backend.seed = cfg.seed;
  return cfg;
}

AdapterConfig load_config(const std::filesystem::path& path) {
  const Bytes raw = read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size()));
}

std::string format_config(const AdapterConfig& cfg) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "method = " << method_name(cfg.method) << "\n";
  os << "rank = " << cfg.rank << "\n";
  os << "alpha = " << cfg.effective_alpha() << "\n";
  os << "backend = " << backend_name(cfg.backend.kind) << "\n";
  os << "lr_p = " << cfg.lr_p << "\n";
  os << "lr_r = " << cfg.lr_r << "\n";
  os << "init_stddev = " << cfg.init_stddev << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "nmf_iters = " << cfg.backend.nmf_iters << "\n";
  os << "nmf_tol = " << cfg.backend.nmf_tol << "\n";
  os << "nmf_warm_iters = " << cfg.backend.nmf_warm_iters << "\n";
  return os.str();
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace deft
