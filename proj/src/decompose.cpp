#include "deft/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "deft/errors.hpp"
#include "deft/linalg.hpp"
#include "deft/rng.hpp"

namespace deft {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxSweeps = 80;

using Columns = std::vector<std::vector<double>>;

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Two passes of classical Gram–Schmidt of `v` against `basis`; returns the residual norm.
double orthogonalize(std::vector<double>& v, const Columns& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& q : basis) {
      const double c = dot(q, v);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * q[i];
    }
  }
  return norm2(v);
}

// Appends unit vectors orthogonal to `basis` until it has `target` columns.
// Candidates are the coordinate axes; the one with the largest residual wins.
void complete_orthonormal(Columns& basis, std::size_t dim, std::size_t target) {
  while (basis.size() < target) {
    std::vector<double> best;
    double best_norm = -1.0;
    for (std::size_t axis = 0; axis < dim; ++axis) {
      std::vector<double> e(dim, 0.0);
      e[axis] = 1.0;
      const double nrm = orthogonalize(e, basis);
      if (nrm > best_norm + 1e-12) {
        best_norm = nrm;
        best = std::move(e);
      }
    }
    for (double& x : best) x /= best_norm;
    basis.push_back(std::move(best));
  }
}

// Flip the column so that its largest-magnitude entry (first on ties) is non-negative.
bool needs_flip(std::span<const double> col) {
  std::size_t arg = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < col.size(); ++i) {
    if (std::abs(col[i]) > best) {
      best = std::abs(col[i]);
      arg = i;
    }
  }
  return !col.empty() && col[arg] < 0.0;
}

Matrix columns_to_matrix(const Columns& cols, std::size_t rows) {
  Matrix out(rows, cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) out.set_column(j, cols[j]);
  return out;
}

Columns matrix_to_columns(const Matrix& a) {
  Columns out(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) out[j] = a.column(j);
  return out;
}

// Hestenes one-sided Jacobi on a tall matrix (m ≥ n), columns stored contiguously.
SvdResult jacobi_svd_tall(const Matrix& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Columns work = matrix_to_columns(a);
  Columns v(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

  const double tol = std::max(1.0, std::sqrt(static_cast<double>(m))) * kEps;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto& cp = work[p];
        auto& cq = work[q];
        const double alpha = dot(cp, cp);
        const double beta = dot(cq, cq);
        const double gamma = dot(cp, cq);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = cp[i], y = cq[i];
          cp[i] = c * x - s * y;
          cq[i] = s * x + c * y;
        }
        auto& vp = v[p];
        auto& vq = v[q];
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i], y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(work[j]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double sigma_max = n == 0 ? 0.0 : sigma[order.front()];
  const double zero_cut = sigma_max * kEps * static_cast<double>(std::max(m, n));

  SvdResult out;
  Columns u_cols;
  Columns v_cols;
  std::vector<std::size_t> missing;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.singular_values.push_back(sigma[j]);
    v_cols.push_back(v[j]);
    if (sigma[j] > zero_cut && sigma[j] > 0.0) {
      std::vector<double> col = work[j];
      for (double& x : col) x /= sigma[j];
      u_cols.push_back(std::move(col));
    } else {
      missing.push_back(k);
    }
  }
  // Numerically-zero singular values: their U columns are completed orthonormally.
  if (!missing.empty()) {
    Columns completed = u_cols;
    complete_orthonormal(completed, m, n);
    Columns merged(n);
    std::size_t from_live = 0, from_new = u_cols.size();
    for (std::size_t k = 0; k < n; ++k) {
      if (std::find(missing.begin(), missing.end(), k) != missing.end()) {
        merged[k] = completed[from_new++];
      } else {
        merged[k] = completed[from_live++];
      }
    }
    u_cols = std::move(merged);
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (needs_flip(u_cols[k])) {
      for (double& x : u_cols[k]) x = -x;
      for (double& x : v_cols[k]) x = -x;
    }
  }
  out.u = columns_to_matrix(u_cols, m);
  out.v = columns_to_matrix(v_cols, n);
  return out;
}

void require_rank(const Matrix& b, std::size_t r, const char* op) {
  const std::size_t limit = std::min(b.rows(), b.cols());
  if (r < 1 || r > limit) {
    throw ConfigError(std::string(op) + ": rank " + std::to_string(r) +
                      " must be in [1, min(m, n)] for a " + b.shape_string() + " matrix");
  }
}

// Orthogonal projection of b onto col(basis).
Matrix project_onto_columns(const Matrix& basis, const Matrix& b) {
  const auto svd = full_svd_oracle(basis);
  std::size_t keep = 0;
  const double s0 = svd.singular_values.empty() ? 0.0 : svd.singular_values.front();
  for (double s : svd.singular_values) {
    if (s > kDefaultRankTol * s0 && s > 0.0) ++keep;
  }
  if (keep == 0) return Matrix(b.rows(), b.cols());
  const Matrix u = svd.u.columns(0, keep);
  return matmul(u, matmul_tn(u, b));
}

}  // namespace

std::string_view backend_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::kQr: return "qr";
    case BackendKind::kTsvd: return "tsvd";
    case BackendKind::kLrmf: return "lrmf";
    case BackendKind::kNmf: return "nmf";
    case BackendKind::kEig: return "eig";
    case BackendKind::kRelax: return "relax";
    case BackendKind::kRelaxNmf: return "relax-nmf";
  }
  return "unknown";
}

BackendKind parse_backend(std::string_view name) {
  for (BackendKind kind : kAllBackends) {
    if (backend_name(kind) == name) return kind;
  }
  throw ConfigError("unknown decomposition backend '" + std::string(name) + "'");
}

bool is_orthonormal_backend(BackendKind kind) {
  return kind == BackendKind::kQr || kind == BackendKind::kTsvd || kind == BackendKind::kEig;
}

SvdResult full_svd_oracle(const Matrix& a) {
  if (a.rows() >= a.cols()) return jacobi_svd_tall(a);
  SvdResult t = jacobi_svd_tall(transpose(a));
  SvdResult out;
  out.singular_values = std::move(t.singular_values);
  out.u = std::move(t.v);
  out.v = std::move(t.u);
  for (std::size_t k = 0; k < out.u.cols(); ++k) {
    if (needs_flip(out.u.column(k))) {
      for (std::size_t i = 0; i < out.u.rows(); ++i) out.u(i, k) = -out.u(i, k);
      for (std::size_t i = 0; i < out.v.rows(); ++i) out.v(i, k) = -out.v(i, k);
    }
  }
  return out;
}

EigResult symmetric_eigen(const Matrix& s) {
  if (s.rows() != s.cols()) throw ShapeError("symmetric_eigen: matrix " + s.shape_string() + " is not square");
  const std::size_t n = s.rows();
  Matrix a = s;
  Matrix v = Matrix::identity(n);
  const double scale_ = frobenius_norm(a);
  for (int sweep = 0; sweep < kMaxSweeps && scale_ > 0.0; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (std::sqrt(off) <= kEps * scale_) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= kEps * kEps * scale_) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(1.0, theta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  EigResult out;
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values.push_back(a(order[k], order[k]));
    auto col = v.column(order[k]);
    if (needs_flip(col)) {
      for (double& x : col) x = -x;
    }
    out.vectors.set_column(k, col);
  }
  return out;
}

DecompositionResult qr_decompose(const Matrix& b) {
  const std::size_t m = b.rows(), r = b.cols();
  if (m < r) throw ShapeError("qr_decompose: need m >= r, got " + b.shape_string());

  Matrix a = b;
  Columns reflectors(r);
  for (std::size_t j = 0; j < r; ++j) {
    std::vector<double> x(m - j);
    for (std::size_t i = j; i < m; ++i) x[i - j] = a(i, j);
    const double nrm = norm2(x);
    if (nrm == 0.0) continue;  // identity reflector
    const double alpha = x[0] >= 0.0 ? -nrm : nrm;
    x[0] -= alpha;
    const double vn = norm2(x);
    if (vn == 0.0) continue;
    for (double& xi : x) xi /= vn;
    for (std::size_t c = j; c < r; ++c) {
      double d = 0.0;
      for (std::size_t i = j; i < m; ++i) d += x[i - j] * a(i, c);
      for (std::size_t i = j; i < m; ++i) a(i, c) -= 2.0 * d * x[i - j];
    }
    reflectors[j] = std::move(x);
  }

  // Thin Q = H_0 ··· H_{r-1} [I_r; 0].
  Columns q(r, std::vector<double>(m, 0.0));
  for (std::size_t c = 0; c < r; ++c) {
    auto& col = q[c];
    col[c] = 1.0;
    for (std::size_t jj = r; jj-- > 0;) {
      const auto& h = reflectors[jj];
      if (h.empty()) continue;
      double d = 0.0;
      for (std::size_t i = jj; i < m; ++i) d += h[i - jj] * col[i];
      for (std::size_t i = jj; i < m; ++i) col[i] -= 2.0 * d * h[i - jj];
    }
  }

  Matrix r_tri(r, r);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = i; j < r; ++j) r_tri(i, j) = a(i, j);
  }

  DecompositionResult out;
  out.kind = BackendKind::kQr;
  double col_scale = 0.0;
  for (std::size_t j = 0; j < r; ++j) col_scale = std::max(col_scale, norm2(b.column(j)));
  const double pivot_cut = 1e-12 * col_scale;
  for (std::size_t j = 0; j < r; ++j) {
    if (std::abs(r_tri(j, j)) <= pivot_cut) ++out.degenerate_columns;
    if (needs_flip(q[j])) {
      for (double& x : q[j]) x = -x;
      for (std::size_t c = j; c < r; ++c) r_tri(j, c) = -r_tri(j, c);
    }
  }
  out.p_factor = columns_to_matrix(q, m);
  out.r_tri = std::move(r_tri);
  return out;
}

DecompositionResult truncated_svd(const Matrix& b, std::size_t r) {
  require_rank(b, r, "truncated_svd");
  auto svd = full_svd_oracle(b);
  DecompositionResult out;
  out.kind = BackendKind::kTsvd;
  out.p_factor = svd.u.columns(0, r);
  out.singular_values.assign(svd.singular_values.begin(), svd.singular_values.begin() + r);
  out.right_vectors = svd.v.columns(0, r);
  return out;
}

DecompositionResult lrmf_decompose(const Matrix& b, std::size_t r) {
  DecompositionResult out = truncated_svd(b, r);
  out.kind = BackendKind::kLrmf;
  const double s0 = out.singular_values.empty() ? 0.0 : out.singular_values.front();
  for (std::size_t j = 0; j < r; ++j) {
    const double s = out.singular_values[j];
    if (s <= s0 * kEps * static_cast<double>(std::max(b.rows(), b.cols()))) {
      ++out.degenerate_columns;
    }
    const double root = std::sqrt(s);
    for (std::size_t i = 0; i < out.p_factor.rows(); ++i) out.p_factor(i, j) *= root;
  }
  return out;
}

namespace {

void multiplicative_update(Matrix& x, const Matrix& num, const Matrix& den) {
  auto xd = x.data();
  auto nd = num.data();
  auto dd = den.data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    if (dd[i] > 0.0) xd[i] *= nd[i] / dd[i];
  }
}

double inner_product(const Matrix& a, const Matrix& b) {
  return std::inner_product(a.data().begin(), a.data().end(), b.data().begin(), 0.0);
}

double sum_squares(const Matrix& a) { return inner_product(a, a); }

}  // namespace

DecompositionResult nmf_decompose(const Matrix& b, std::size_t r, std::size_t iters, double tol,
                                  std::uint64_t seed, const NmfWarmStart* warm,
                                  std::size_t warm_iters) {
  require_rank(b, r, "nmf_decompose");
  const std::size_t m = b.rows(), n = b.cols();

  DecompositionResult out;
  out.kind = BackendKind::kNmf;
  Matrix target = relu(b);
  out.clamped_negative = std::any_of(b.data().begin(), b.data().end(), [](double x) { return x < 0.0; });

  const double total = std::accumulate(target.data().begin(), target.data().end(), 0.0);
  if (total == 0.0) {
    out.p_factor = Matrix(m, r);
    out.h_factor = Matrix(r, n);
    out.error_trace = {0.0};
    return out;
  }

  Matrix w, h;
  std::size_t cap = iters;
  if (warm != nullptr && warm->w.rows() == m && warm->w.cols() == r && warm->h.rows() == r &&
      warm->h.cols() == n) {
    w = warm->w;
    h = warm->h;
    cap = warm_iters;
  } else {
    Rng rng(seed);
    const double init_scale = std::sqrt(total / static_cast<double>(m * n) / static_cast<double>(r));
    w = scale(uniform(rng, m, r), init_scale);
    h = scale(uniform(rng, r, n), init_scale);
  }

  // ‖T − WH‖² = ‖T‖² − 2⟨W, THᵀ⟩ + ⟨WᵀW, HHᵀ⟩, reusing the products the updates need.
  const double t_sq = sum_squares(target);
  auto residual = [&](const Matrix& wtw, const Matrix& thT, const Matrix& hhT) {
    const double sq = t_sq - 2.0 * inner_product(w, thT) + inner_product(wtw, hhT);
    return std::sqrt(std::max(sq, 0.0));
  };
  Matrix wtw = matmul_tn(w, w);
  double err = residual(wtw, matmul_nt(target, h), matmul_nt(h, h));
  out.error_trace.push_back(err);
  for (std::size_t it = 0; it < cap && err > 0.0; ++it) {
    {
      const Matrix num = matmul_tn(w, target);
      const Matrix den = matmul(wtw, h);
      multiplicative_update(h, num, den);
    }
    const Matrix hhT = matmul_nt(h, h);
    const Matrix thT = matmul_nt(target, h);
    multiplicative_update(w, thT, matmul(w, hhT));
    wtw = matmul_tn(w, w);
    const double prev = err;
    err = residual(wtw, thT, hhT);
    out.error_trace.push_back(err);
    ++out.iterations;
    if ((prev - err) < tol * prev) break;
  }
  out.p_factor = std::move(w);
  out.h_factor = std::move(h);
  return out;
}

DecompositionResult eig_project(const Matrix& b, std::size_t r) {
  const std::size_t m = b.rows(), n = b.cols();
  if (r < 1 || r > m) {
    throw ConfigError("eig_project: rank " + std::to_string(r) + " must be in [1, m] for a " +
                      b.shape_string() + " matrix");
  }
  DecompositionResult out;
  out.kind = BackendKind::kEig;
  Columns basis;
  std::vector<double> values;
  if (n >= m) {
    auto eig = symmetric_eigen(matmul_nt(b, b));
    for (std::size_t k = 0; k < r; ++k) {
      basis.push_back(eig.vectors.column(k));
      values.push_back(std::max(eig.values[k], 0.0));
    }
  } else {
    // BBᵀ has rank ≤ n: its nonzero eigenpairs come from the n x n Gram matrix BᵀB
    // via u = Bv / √λ; the remaining eigenvalues are exactly zero.
    auto eig = symmetric_eigen(matmul_tn(b, b));
    const double lmax = std::max(eig.values.front(), 0.0);
    for (std::size_t k = 0; k < n && basis.size() < r; ++k) {
      const double lambda = eig.values[k];
      if (!(lambda > lmax * kEps * kEps * static_cast<double>(m * m)) || lambda <= 0.0) break;
      std::vector<double> u(m, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += b(i, j) * eig.vectors(j, k);
        u[i] = acc;
      }
      const double nrm = orthogonalize(u, basis);
      if (nrm == 0.0) break;
      for (double& x : u) x /= nrm;
      basis.push_back(std::move(u));
      values.push_back(lambda);
    }
    const std::size_t live = basis.size();
    complete_orthonormal(basis, m, r);
    values.resize(r, 0.0);
    for (std::size_t k = live; k < r; ++k) values[k] = 0.0;
  }
  for (auto& col : basis) {
    if (needs_flip(col)) {
      for (double& x : col) x = -x;
    }
  }
  out.p_factor = columns_to_matrix(basis, m);
  out.eigenvalues = std::move(values);
  return out;
}

DecompositionResult relax(const Matrix& b, bool nonneg) {
  DecompositionResult out;
  out.kind = nonneg ? BackendKind::kRelaxNmf : BackendKind::kRelax;
  out.p_factor = nonneg ? relu(b) : b;
  return out;
}

DecompositionResult decompose(const Matrix& b, const Backend& backend, const NmfWarmStart* warm) {
  require_rank(b, backend.rank, "decompose");
  const std::size_t r = backend.rank;
  switch (backend.kind) {
    case BackendKind::kQr:
      return qr_decompose(r == b.cols() ? b : b.columns(0, r));
    case BackendKind::kTsvd:
      return truncated_svd(b, r);
    case BackendKind::kLrmf:
      return lrmf_decompose(b, r);
    case BackendKind::kNmf:
      return nmf_decompose(b, r, backend.nmf_iters, backend.nmf_tol, backend.seed, warm,
                           backend.nmf_warm_iters);
    case BackendKind::kEig:
      return eig_project(b, r);
    case BackendKind::kRelax:
      return relax(r == b.cols() ? b : b.columns(0, r), false);
    case BackendKind::kRelaxNmf:
      return relax(r == b.cols() ? b : b.columns(0, r), true);
  }
  throw ConfigError("decompose: unknown backend");
}

Matrix low_rank_approximation(const Matrix& b, const DecompositionResult& result) {
  const Matrix& p = result.p_factor;
  switch (result.kind) {
    case BackendKind::kQr:
    case BackendKind::kEig:
      return matmul(p, matmul_tn(p, b));
    case BackendKind::kTsvd: {
      Matrix us = p;
      for (std::size_t j = 0; j < us.cols(); ++j) {
        for (std::size_t i = 0; i < us.rows(); ++i) us(i, j) *= result.singular_values[j];
      }
      return matmul_nt(us, *result.right_vectors);
    }
    case BackendKind::kLrmf: {
      // Ũ · (√S Vᵀ)
      Matrix sv = transpose(*result.right_vectors);
      for (std::size_t j = 0; j < sv.rows(); ++j) {
        const double root = std::sqrt(result.singular_values[j]);
        for (double& x : sv.row(j)) x *= root;
      }
      return matmul(p, sv);
    }
    case BackendKind::kNmf:
      return matmul(p, *result.h_factor);
    case BackendKind::kRelax:
    case BackendKind::kRelaxNmf:
      return project_onto_columns(p, b);
  }
  throw ConfigError("low_rank_approximation: unknown backend");
}

double reconstruction_error(const Matrix& b, const DecompositionResult& result) {
  const double denom = frobenius_norm(b);
  const double diff = frobenius_norm(subtract(b, low_rank_approximation(b, result)));
  return denom == 0.0 ? diff : diff / denom;
}

}  // namespace deft
