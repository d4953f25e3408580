#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace referee::num {

// Dense row-major matrix of 64-bit floats. Scalars are 1x1, column vectors
// n x 1, row vectors 1 x m. This is the only tensor carrier in the toolkit;
// everything at desk scale fits comfortably in dense storage.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix scalar(double v) {
    Matrix m(1, 1);
    m.data[0] = v;
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.data[i * n + i] = 1.0;
    return m;
  }

  static Matrix column(const std::vector<double>& v) {
    Matrix m(v.size(), 1);
    m.data = v;
    return m;
  }

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::size_t size() const { return rows * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
};

// Non-owning read view into tape storage.
struct MatrixView {
  std::size_t rows = 0;
  std::size_t cols = 0;
  const double* data = nullptr;

  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return rows * cols; }
  Matrix copy() const {
    Matrix m(rows, cols);
    m.data.assign(data, data + rows * cols);
    return m;
  }
};

inline std::string shape_str(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace referee::num
