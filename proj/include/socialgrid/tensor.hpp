#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace socialgrid {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array. Precision is a template parameter: float for
/// training, double for gradient checks.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw std::invalid_argument("tensor: shape " + shape_string(shape_) + " does not match " +
                                  std::to_string(data_.size()) + " values");
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  template <typename... Idx>
  T& operator()(Idx... idx) noexcept {
    return data_[offset(static_cast<std::size_t>(idx)...)];
  }
  template <typename... Idx>
  const T& operator()(Idx... idx) const noexcept {
    return data_[offset(static_cast<std::size_t>(idx)...)];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Same data viewed under a new shape of equal size.
  Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  template <typename... Idx>
  std::size_t offset(Idx... idx) const noexcept {
    const std::size_t index[] = {idx...};
    std::size_t off = 0;
    for (std::size_t a = 0; a < sizeof...(Idx); ++a) off = off * shape_[a] + index[a];
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Trainable array with its gradient and Adam moment buffers.
template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;
  Tensor<T> v;
  std::uint64_t step_count = 0;

  Parameter() = default;
  explicit Parameter(Tensor<T> init)
      : value(std::move(init)),
        grad(value.shape()),
        m(value.shape()),
        v(value.shape()) {}

  const Shape& shape() const noexcept { return value.shape(); }
  void zero_grad() { grad.fill(T{0}); }

  /// Replaces the value and resets gradient and optimizer state.
  void reset(Tensor<T> init) { *this = Parameter(std::move(init)); }
};

/// Small row-major 2-D container used for grid-shaped data.
template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw std::invalid_argument("matrix: size mismatch");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  const std::vector<T>& storage() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }

  /// Grows to at least the given extents; new cells take `fill`.
  void resize(std::size_t rows, std::size_t cols, T fill = T{}) {
    if (rows == rows_ && cols == cols_) return;
    std::vector<T> next(rows * cols, fill);
    for (std::size_t r = 0; r < std::min(rows, rows_); ++r)
      for (std::size_t c = 0; c < std::min(cols, cols_); ++c) next[r * cols + c] = data_[r * cols_ + c];
    rows_ = rows;
    cols_ = cols;
    data_ = std::move(next);
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

}  // namespace socialgrid
