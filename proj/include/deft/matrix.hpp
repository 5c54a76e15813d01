#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace deft {

/// Dense real matrix, 64-bit floats, row-major storage.
///
/// Element (i, j) lives at data()[i * cols() + j]. The checkpoint formats in
/// store.hpp serialize exactly this layout. A default-constructed Matrix is
/// empty (0 x 0) and is used for "parameter not present" slots.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column_vector(std::span<const double> values);
  static Matrix diagonal(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::vector<double> column(std::size_t j) const;
  void set_column(std::size_t j, std::span<const double> values);

  /// Columns [first, first + count).
  Matrix columns(std::size_t first, std::size_t count) const;

  std::string shape_string() const;

  bool is_finite() const noexcept;

  /// Bitwise equality of shape and payload (distinguishes -0.0 from 0.0).
  bool bit_equal(const Matrix& other) const noexcept;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace deft
