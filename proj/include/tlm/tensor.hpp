// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#ifndef TLM_TENSOR_HPP_
#define TLM_TENSOR_HPP_

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlm {

inline std::string shape_to_string(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

// Dense row-major tensor. `grad` is either empty or the same size as
// `values`; it is allocated lazily by whoever needs to accumulate into it.
template <typename T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> values;
  std::vector<T> grad;

  Tensor() = default;

  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    check_shape();
    values.assign(static_cast<size_t>(shape_numel(shape)), T(0));
  }

  Tensor(std::vector<int64_t> s, std::vector<T> v)
      : shape(std::move(s)), values(std::move(v)) {
    check_shape();
    if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
      throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                  " values do not fill shape " +
                                  shape_to_string(shape));
    }
  }

  static Tensor full(std::vector<int64_t> s, T value) {
    Tensor t(std::move(s));
    std::fill(t.values.begin(), t.values.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  // Row/column accessors for the common 2-D case.
  int64_t rows() const { return shape.at(0); }
  int64_t cols() const { return shape.at(1); }
  T* row_ptr(int64_t r) { return values.data() + r * cols(); }
  const T* row_ptr(int64_t r) const { return values.data() + r * cols(); }
  T& at(int64_t r, int64_t c) { return values[static_cast<size_t>(r * cols() + c)]; }
  const T& at(int64_t r, int64_t c) const {
    return values[static_cast<size_t>(r * cols() + c)];
  }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
  }

 private:
  void check_shape() const {
    if (shape.empty()) throw std::invalid_argument("tensor: empty shape");
    for (int64_t d : shape) {
      if (d <= 0) {
        throw std::invalid_argument("tensor: non-positive dimension in " +
                                    shape_to_string(shape));
      }
    }
  }
};

}  // namespace tlm

#endif  // TLM_TENSOR_HPP_
