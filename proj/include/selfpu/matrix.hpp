// matrix.hpp -- minimal row-major dense matrix.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "selfpu/errors.hpp"

namespace selfpu {

template <class T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{0})
      : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    data.assign(r * c, T{0});
  }

  void fill(T v) { data.assign(data.size(), v); }
};

template <class T, class U>
Matrix<T> matrix_cast(const Matrix<U>& m) {
  Matrix<T> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    out.data[i] = static_cast<T>(m.data[i]);
  return out;
}

}  // namespace selfpu
