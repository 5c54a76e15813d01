#include "deft/bench.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <optional>

#include "deft/errors.hpp"
#include "deft/linalg.hpp"
#include "deft/rng.hpp"

namespace deft {

std::vector<BenchRow> bench_backends(std::size_t dim, std::size_t rank, std::size_t iters,
                                     std::uint64_t seed, const std::vector<BackendKind>& backends) {
  if (iters < 1) throw ConfigError("bench: iters must be at least 1");
  if (rank < 1 || rank > dim) throw ConfigError("bench: rank must be in [1, dim]");
  using clock = std::chrono::steady_clock;

  std::vector<BenchRow> rows;
  for (BackendKind kind : backends) {
    Rng rng(seed);
    Matrix latent = gaussian(rng, dim, rank, 1.0);
    Backend backend{.kind = kind, .rank = rank, .seed = seed};

    std::optional<NmfWarmStart> warm;
    auto run_once = [&] {
      DecompositionResult res = decompose(latent, backend, warm ? &*warm : nullptr);
      if (kind == BackendKind::kNmf) warm = NmfWarmStart{res.p_factor, *res.h_factor};
      return res;
    };
    run_once();

    std::vector<double> samples;
    samples.reserve(iters);
    for (std::size_t it = 0; it < iters; ++it) {
      latent = add(latent, gaussian(rng, dim, rank, 1e-3));
      const auto start = clock::now();
      const DecompositionResult res = run_once();
      const auto stop = clock::now();
      if (res.p_factor.rows() != dim) throw Error("bench: unexpected factor shape");
      samples.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    rows.push_back(BenchRow{kind, dim, rank, iters, median, sorted.front(), sorted.back()});
  }
  return rows;
}

void write_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "backend,dim,rank,iters,median_ms,min_ms,max_ms\n" << std::setprecision(6);
  for (const auto& r : rows) {
    os << backend_name(r.backend) << "," << r.dim << "," << r.rank << "," << r.iters << ","
       << r.median_ms << "," << r.min_ms << "," << r.max_ms << "\n";
  }
}

}  // namespace deft
