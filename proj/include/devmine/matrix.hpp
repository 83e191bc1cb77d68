#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace devmine {

/// Dense row-major matrix of doubles. Used for point sets, feature tables
/// and per-row class distributions.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix column(std::initializer_list<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double> column_values(std::size_t c) const;

  /// Appends one row; the first row fixes the column count.
  void push_row(std::span<const double> values);

  /// Subset of rows, in the given order.
  Matrix select_rows(std::span<const std::size_t> indices) const;
  /// Subset of columns, in the given order.
  Matrix select_cols(std::span<const std::size_t> indices) const;

  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

}  // namespace devmine
