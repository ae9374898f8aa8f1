#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "hitframe/common.hpp"

namespace hitframe::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major double tensor. The shape is part of the value; a scalar is
// shape {1}.
struct TensorBuffer {
  Shape shape;
  std::vector<double> values;

  TensorBuffer() = default;
  TensorBuffer(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    require(shape_numel(shape) == values.size(), Errc::shape_mismatch,
            "tensor data length " + std::to_string(values.size()) + " does not match shape " +
                shape_str(shape));
    for (std::size_t d : shape)
      require(d > 0, Errc::shape_mismatch, "zero extent in shape " + shape_str(shape));
  }

  static TensorBuffer zeros(Shape s) {
    std::size_t n = shape_numel(s);
    return TensorBuffer(std::move(s), std::vector<double>(n, 0.0));
  }

  static TensorBuffer full(Shape s, double v) {
    std::size_t n = shape_numel(s);
    return TensorBuffer(std::move(s), std::vector<double>(n, v));
  }

  static TensorBuffer scalar(double v) { return TensorBuffer({1}, {v}); }

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  double& operator()(std::size_t i) { return values[i]; }
  double operator()(std::size_t i) const { return values[i]; }

  double& operator()(std::size_t i, std::size_t j) { return values[i * shape[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * shape[1] + j]; }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return values[(i * shape[1] + j) * shape[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values[(i * shape[1] + j) * shape[2] + k];
  }

  double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return values[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return values[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
  }

  bool same_shape(const TensorBuffer& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

using Tensor = TensorBuffer;

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  require(a.same_shape(b), Errc::shape_mismatch,
          std::string(where) + ": " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace hitframe::nn
