#include "deft/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deft/decompose.hpp"
#include "deft/errors.hpp"

namespace deft {

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

}  // namespace

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch(op, a, b);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  const std::size_t m = a.rows(), inner = a.cols(), n = b.cols();
  Matrix out(m, n);
  const double* __restrict ap = a.data().data();
  const double* __restrict bp = b.data().data();
  double* __restrict op = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict orow = op + i * n;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = ap[i * inner + k];
      if (aik == 0.0) continue;
      const double* __restrict brow = bp + k * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_mismatch("matmul_tn", a, b);
  const std::size_t inner = a.rows(), m = a.cols(), n = b.cols();
  Matrix out(m, n);
  const double* __restrict ap = a.data().data();
  const double* __restrict bp = b.data().data();
  double* __restrict op = out.data().data();
  for (std::size_t k = 0; k < inner; ++k) {
    const double* __restrict arow = ap + k * m;
    const double* __restrict brow = bp + k * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* __restrict orow = op + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_mismatch("matmul_nt", a, b);
  const std::size_t m = a.rows(), n = b.rows(), inner = a.cols();
  Matrix out(m, n);
  const double* __restrict ap = a.data().data();
  const double* __restrict bp = b.data().data();
  double* __restrict op = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* __restrict arow = ap + i * inner;
    for (std::size_t j = 0; j < n; ++j) {
      const double* __restrict brow = bp + j * inner;
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
      op[i * n + j] = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  return out;
}

Matrix relu(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  auto o = out.data();
  auto ad = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] > 0.0 ? ad[i] : 0.0;
  return out;
}

Matrix relu_mask(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  auto o = out.data();
  auto ad = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] > 0.0 ? 1.0 : 0.0;
  return out;
}

Matrix hcat(std::initializer_list<const Matrix*> blocks) {
  std::size_t rows = 0, cols = 0;
  bool first = true;
  for (const Matrix* blk : blocks) {
    if (first) {
      rows = blk->rows();
      first = false;
    } else if (blk->rows() != rows) {
      throw ShapeError("hcat: row counts differ (" + std::to_string(rows) + " vs " +
                       blk->shape_string() + ")");
    }
    cols += blk->cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Matrix* blk : blocks) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < blk->cols(); ++j) out(i, offset + j) = (*blk)(i, j);
    }
    offset += blk->cols();
  }
  return out;
}

Matrix hcat(const Matrix& a, const Matrix& b) { return hcat({&a, &b}); }

double frobenius_norm(const Matrix& a) {
  // Scaled accumulation so that huge or tiny entries neither overflow nor underflow.
  double scale_ = 0.0, ssq = 1.0;
  for (double v : a.data()) {
    if (v == 0.0) continue;
    const double av = std::abs(v);
    if (scale_ < av) {
      ssq = 1.0 + ssq * (scale_ / av) * (scale_ / av);
      scale_ = av;
    } else {
      ssq += (av / scale_) * (av / scale_);
    }
  }
  return scale_ * std::sqrt(ssq);
}

double max_abs(const Matrix& a) {
  double out = 0.0;
  for (double v : a.data()) out = std::max(out, std::abs(v));
  return out;
}

double relative_error(const Matrix& a, const Matrix& b) {
  const double diff = frobenius_norm(subtract(a, b));
  const double denom = frobenius_norm(b);
  if (denom == 0.0) return diff == 0.0 ? 0.0 : diff / std::numeric_limits<double>::min();
  return diff / denom;
}

std::size_t numerical_rank(const Matrix& a, double tol) {
  if (!(tol > 0.0)) throw PreconditionError("numerical_rank: tol must be positive");
  if (a.empty()) return 0;
  const auto svd = full_svd_oracle(a);
  if (svd.singular_values.empty() || svd.singular_values.front() == 0.0) return 0;
  const double cutoff = tol * svd.singular_values.front();
  return static_cast<std::size_t>(std::count_if(svd.singular_values.begin(),
                                                svd.singular_values.end(),
                                                [cutoff](double s) { return s > cutoff; }));
}

}  // namespace deft
