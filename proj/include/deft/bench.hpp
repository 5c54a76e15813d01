#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <iterator>
#include <vector>

#include "deft/decompose.hpp"

namespace deft {

struct BenchRow {
  BackendKind backend = BackendKind::kQr;
  std::size_t dim = 0;
  std::size_t rank = 0;
  std::size_t iters = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
};

/// Per-training-step factorization cost of each backend on a dim x rank latent.
///
/// Each iteration nudges the latent as an SGD step would (outside the timed
/// region) and times one decompose() call; NMF warm-starts from the
/// previous iteration's factors, as it does inside an adapter. One untimed
/// warm-up call precedes the timed ones.
std::vector<BenchRow> bench_backends(std::size_t dim, std::size_t rank, std::size_t iters,
                                     std::uint64_t seed,
                                     const std::vector<BackendKind>& backends = {
                                         std::begin(kAllBackends), std::end(kAllBackends)});

/// CSV: backend,dim,rank,iters,median_ms,min_ms,max_ms
void write_csv(std::ostream& os, const std::vector<BenchRow>& rows);

}  // namespace deft
