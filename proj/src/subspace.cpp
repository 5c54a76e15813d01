#include "deft/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "deft/decompose.hpp"
#include "deft/errors.hpp"

namespace deft {

namespace {

// ‖(I − Π_col(basis))·a‖_F / ‖a‖_F, projector from the oracle SVD.
double outside_fraction(const Matrix& basis, const Matrix& a, double tol) {
  const double an = frobenius_norm(a);
  if (an == 0.0) return 0.0;
  const auto svd = full_svd_oracle(basis);
  const double s0 = svd.singular_values.empty() ? 0.0 : svd.singular_values.front();
  std::size_t keep = 0;
  for (double s : svd.singular_values) {
    if (s > tol * s0 && s > 0.0) ++keep;
  }
  if (keep == 0) return 1.0;
  const Matrix u = svd.u.columns(0, keep);
  return frobenius_norm(subtract(a, matmul(u, matmul_tn(u, a)))) / an;
}

}  // namespace

double verify_decomposition_identity(const Matrix& w, const Matrix& q) {
  if (q.rows() != w.rows()) {
    throw ShapeError("verify_decomposition_identity: q " + q.shape_string() + " vs w " +
                     w.shape_string());
  }
  const std::size_t m = w.rows();
  const double deviation =
      frobenius_norm(subtract(matmul_tn(q, q), Matrix::identity(q.cols())));
  if (deviation > 1e-8) {
    throw PreconditionError("verify_decomposition_identity: q is not orthonormal, ||QtQ - I||_F = " +
                            std::to_string(deviation));
  }
  const Matrix parallel = matmul(q, matmul_tn(q, w));
  const Matrix complement = subtract(Matrix::identity(m), matmul_nt(q, q));
  const Matrix orthogonal = matmul(complement, w);
  const Matrix residual = subtract(subtract(w, parallel), orthogonal);
  const double wn = frobenius_norm(w);
  const double rn = frobenius_norm(residual);
  return wn == 0.0 ? rn : rn / wn;
}

SubspaceReport check_containment(const Matrix& w0, const Matrix& q, const Matrix& w_total,
                                 double tol) {
  if (q.rows() != w0.rows() || w_total.rows() != w0.rows()) {
    throw ShapeError("check_containment: row counts differ (" + w0.shape_string() + ", " +
                     q.shape_string() + ", " + w_total.shape_string() + ")");
  }
  SubspaceReport rep;
  const Matrix w_reduce = subtract(w0, matmul(q, matmul_tn(q, w0)));
  const Matrix w0_q = hcat(w0, q);
  rep.rank_w0 = numerical_rank(w0, tol);
  rep.rank_reduce = numerical_rank(w_reduce, tol);
  rep.rank_total = numerical_rank(w_total, tol);
  rep.rank_union = numerical_rank(w0_q, tol);
  rep.rank_union_total = numerical_rank(hcat({&w0, &q, &w_total}), tol);
  rep.rank_w0_total = numerical_rank(hcat(w0, w_total), tol);
  rep.containment_holds = rep.rank_union == rep.rank_union_total;
  rep.extension_holds = rep.rank_w0_total > rep.rank_w0;
  rep.residuals["reduce_outside_w0"] = outside_fraction(w0, w_reduce, tol);
  rep.residuals["total_outside_union"] = outside_fraction(w0_q, w_total, tol);
  return rep;
}

ExtensionWitness extension_witness() {
  ExtensionWitness w;
  w.w0 = Matrix::from_rows({{1, 2, 0, 0}, {2, 1, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}});
  w.q = Matrix::from_rows({{0}, {0}, {1}, {0}});
  w.r = Matrix::from_rows({{1, 0, 0, 0}});
  w.w_total = add(subtract(w.w0, matmul(w.q, matmul_tn(w.q, w.w0))), matmul(w.q, w.r));
  return w;
}

DisplacementField displacement_field(const AdapterState& state, const GridSpec& grid) {
  const std::size_t n = state.cols();
  if (grid.axis_x >= n || grid.axis_y >= n || grid.axis_x == grid.axis_y) {
    throw ConfigError("displacement_field: grid axes must be two distinct input coordinates < " +
                      std::to_string(n));
  }
  if (grid.nx < 1 || grid.ny < 1) throw ConfigError("displacement_field: empty grid");

  Matrix delta_full, delta_nonneg;
  if (state.config().method == Method::kLora) {
    delta_full = subtract(merge(state), state.w0());
    delta_nonneg = delta_full;
  } else {
    const Matrix p = state.projection();
    delta_full = subtract(merge_with_projection(state, p), state.w0());
    delta_nonneg = subtract(merge_with_projection(state, relu(p)), state.w0());
  }

  auto coord = [](double lo, double hi, std::size_t count, std::size_t i) {
    return count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  };

  const std::size_t total = grid.nx * grid.ny;
  Matrix x(n, total);
  DisplacementField field;
  field.grid_points.reserve(total);
  for (std::size_t ix = 0; ix < grid.nx; ++ix) {
    for (std::size_t iy = 0; iy < grid.ny; ++iy) {
      const std::size_t col = ix * grid.ny + iy;
      const double gx = coord(grid.x_min, grid.x_max, grid.nx, ix);
      const double gy = coord(grid.y_min, grid.y_max, grid.ny, iy);
      x(grid.axis_x, col) = gx;
      x(grid.axis_y, col) = gy;
      field.grid_points.push_back({gx, gy});
    }
  }
  const Matrix full = matmul(delta_full, x);
  const Matrix nonneg = matmul(delta_nonneg, x);
  field.displacements_full.resize(total);
  field.displacements_nonneg.resize(total);
  for (std::size_t c = 0; c < total; ++c) {
    field.displacements_full[c] = full.column(c);
    field.displacements_nonneg[c] = nonneg.column(c);
  }
  return field;
}

DisplacementSummary summarize(const DisplacementField& field) {
  DisplacementSummary s;
  const std::size_t count = field.displacements_full.size();
  if (count == 0) return s;
  auto norm = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
  };
  for (std::size_t i = 0; i < count; ++i) {
    const double f = norm(field.displacements_full[i]);
    const double g = norm(field.displacements_nonneg[i]);
    s.mean_norm_full += f;
    s.mean_norm_nonneg += g;
    s.max_norm_full = std::max(s.max_norm_full, f);
    s.max_norm_nonneg = std::max(s.max_norm_nonneg, g);
  }
  s.mean_norm_full /= static_cast<double>(count);
  s.mean_norm_nonneg /= static_cast<double>(count);
  return s;
}

void write_csv(std::ostream& os, const DisplacementField& field) {
  const std::size_t m = field.displacements_full.empty() ? 0 : field.displacements_full.front().size();
  os << "x,y";
  for (std::size_t i = 0; i < m; ++i) os << ",full_" << i;
  for (std::size_t i = 0; i < m; ++i) os << ",nonneg_" << i;
  os << "\n" << std::setprecision(17);
  for (std::size_t p = 0; p < field.grid_points.size(); ++p) {
    os << field.grid_points[p][0] << "," << field.grid_points[p][1];
    for (double v : field.displacements_full[p]) os << "," << v;
    for (double v : field.displacements_nonneg[p]) os << "," << v;
    os << "\n";
  }
}

}  // namespace deft
