#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "deft/adapters.hpp"
#include "deft/linalg.hpp"
#include "deft/matrix.hpp"

namespace deft {

/// Rank bookkeeping for one (W₀, Q, W_total) triple.
struct SubspaceReport {
  std::size_t rank_w0 = 0;
  /// rank((I − QQᵀ)W₀)
  std::size_t rank_reduce = 0;
  std::size_t rank_total = 0;
  /// rank([W₀ | Q])
  std::size_t rank_union = 0;
  /// rank([W₀ | Q | W_total])
  std::size_t rank_union_total = 0;
  /// rank([W₀ | W_total])
  std::size_t rank_w0_total = 0;
  /// col(W_total) ⊆ col(W₀) + col(Q)
  bool containment_holds = false;
  /// col(W₀) + col(W_total) is strictly larger than col(W₀)
  bool extension_holds = false;
  /// reduce_outside_w0: ‖(I − Π_W₀)·W_reduce‖_F / ‖W_reduce‖_F
  /// total_outside_union: ‖(I − Π_[W₀|Q])·W_total‖_F / ‖W_total‖_F
  std::map<std::string, double> residuals;
};

/// ‖W − Q(QᵀW) − (I − QQᵀ)W‖_F / ‖W‖_F, the complement term formed with an
/// explicit m x m projector. Throws PreconditionError when ‖QᵀQ − I‖_F > 1e-8.
double verify_decomposition_identity(const Matrix& w, const Matrix& q);

SubspaceReport check_containment(const Matrix& w0, const Matrix& q, const Matrix& w_total,
                                 double tol = kDefaultRankTol);

/// Integer instance where W_total leaves col(W₀): W₀ is 4x4 of rank 2,
/// Q = e₃ lies outside col(W₀), R = e₁ᵀ, so W_total = W₀ + e₃e₁ᵀ and
/// rank([W₀ | W_total]) = rank(W₀) + 1.
struct ExtensionWitness {
  Matrix w0;
  Matrix q;
  Matrix r;
  Matrix w_total;
};

ExtensionWitness extension_witness();

/// Regular grid over a 2D slice of the input space: coordinates `axis_x` and
/// `axis_y` vary, all others are zero.
struct GridSpec {
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;
  std::size_t nx = 21;
  std::size_t ny = 21;
  std::size_t axis_x = 0;
  std::size_t axis_y = 1;
};

struct DisplacementField {
  std::vector<std::array<double, 2>> grid_points;
  /// (W_total − W₀)x with the state's projection factor P.
  std::vector<std::vector<double>> displacements_full;
  /// Same with ReLU(P) in place of P.
  std::vector<std::vector<double>> displacements_nonneg;
};

struct DisplacementSummary {
  double mean_norm_full = 0.0;
  double max_norm_full = 0.0;
  double mean_norm_nonneg = 0.0;
  double max_norm_nonneg = 0.0;
};

/// Grid points run x-major (x outer, y inner). For LoRA, which has no P,
/// both fields are the plain update B·A·x.
DisplacementField displacement_field(const AdapterState& state, const GridSpec& grid = {});

DisplacementSummary summarize(const DisplacementField& field);

/// CSV: x,y,full_0..full_{m-1},nonneg_0..nonneg_{m-1}
void write_csv(std::ostream& os, const DisplacementField& field);

}  // namespace deft
