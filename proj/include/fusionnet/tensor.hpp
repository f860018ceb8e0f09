#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusionnet {

/// Rank-4 extent in (batch, channels, height, width) order.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t size() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string to_string() const;
};

/// Dense row-major NCHW array. Plain value type; gradients live on the tape.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return static_cast<std::size_t>(((n * shape_.c + c) * shape_.h + y) * shape_.w + x);
  }
  T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) { return data_[index(n, c, y, x)]; }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data_[index(n, c, y, x)];
  }

  void fill(T v);
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

void check_shape(const Shape& shape);

/// Throws std::invalid_argument naming both shapes when they differ.
void require_same_shape(const Shape& a, const Shape& b, const char* op);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fusionnet
