#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "ctxnmt/error.hpp"

namespace ctxnmt {

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(shape[i]);
  }
  out += "]";
  return out;
}

// Dense row-major tensor. Rank 1 and rank 2 are the only shapes the model
// uses; a rank-1 tensor of extent d is treated as a single row [1 x d] by
// the row/column helpers so bias vectors compose with matrices naturally.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> s, T fill = T{}) : shape(std::move(s)) {
    data.assign(count(shape), fill);
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor scalar(T v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }

  static Tensor from(std::vector<std::size_t> s, std::vector<T> values) {
    if (count(s) != values.size()) {
      throw ShapeError("Tensor::from: " + shape_string(s) + " needs " +
                       std::to_string(count(s)) + " values, got " +
                       std::to_string(values.size()));
    }
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    return t;
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }

  // Row/column view: rank 1 counts as one row.
  std::size_t rows() const {
    if (shape.empty()) return 0;
    return rank() == 1 ? 1 : shape[0];
  }
  std::size_t cols() const {
    if (shape.empty()) return 0;
    return rank() == 1 ? shape[0] : shape[1];
  }

  T& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  void fill(T v) {
    for (T& x : data) x = v;
  }
};

}  // namespace ctxnmt
