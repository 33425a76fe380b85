#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "avgn/common.hpp"

namespace avgn {

// Dense row-major tensor. Rank is dynamic; most of the codebase uses rank 1-4.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s, T fill = T(0))
      : shape(std::move(s)), data(static_cast<size_t>(count(shape)), fill) {}

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      require(d >= 0, "tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // rank-2 access
  T& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  const T& at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }

  // rank-3 access
  T& at(int64_t b, int64_t i, int64_t j) {
    return data[static_cast<size_t>((b * shape[1] + i) * shape[2] + j)];
  }
  const T& at(int64_t b, int64_t i, int64_t j) const {
    return data[static_cast<size_t>((b * shape[1] + i) * shape[2] + j)];
  }

  // rank-4 access
  T& at(int64_t b, int64_t c, int64_t i, int64_t j) {
    return data[static_cast<size_t>(((b * shape[1] + c) * shape[2] + i) * shape[3] + j)];
  }
  const T& at(int64_t b, int64_t c, int64_t i, int64_t j) const {
    return data[static_cast<size_t>(((b * shape[1] + c) * shape[2] + i) * shape[3] + j)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  bool same_shape_sizes(const Tensor<U>& o) const {
    return shape == o.shape;
  }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
Tensor<T> tensor2(int64_t r, int64_t c, std::initializer_list<T> vals) {
  Tensor<T> t({r, c});
  require(static_cast<int64_t>(vals.size()) == r * c, "tensor2: size mismatch");
  std::copy(vals.begin(), vals.end(), t.data.begin());
  return t;
}

template <typename T>
Tensor<T> tensor1(std::initializer_list<T> vals) {
  Tensor<T> t({static_cast<int64_t>(vals.size())});
  std::copy(vals.begin(), vals.end(), t.data.begin());
  return t;
}

}  // namespace avgn
