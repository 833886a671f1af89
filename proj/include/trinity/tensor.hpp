#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "trinity/errors.hpp"

namespace trinity {

/// Dense row-major 2D array of doubles.
class Plane {
 public:
  Plane() = default;
  Plane(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Plane(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ValidationError("Plane: data size does not match shape");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool operator==(const Plane&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Channel-major C×H×W array of doubles. Used for images and feature maps.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
      : c_(channels), h_(height), w_(width), data_(channels * height * width, fill) {}
  Tensor3(std::size_t channels, std::size_t height, std::size_t width,
          std::vector<double> data)
      : c_(channels), h_(height), w_(width), data_(std::move(data)) {
    if (data_.size() != c_ * h_ * w_) {
      throw ValidationError("Tensor3: data size does not match shape");
    }
  }

  std::size_t channels() const { return c_; }
  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  std::size_t plane_size() const { return h_ * w_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * h_ + y) * w_ + x];
  }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * h_ + y) * w_ + x];
  }

  std::span<double> channel(std::size_t c) {
    return std::span<double>(data_).subspan(c * h_ * w_, h_ * w_);
  }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * h_ * w_, h_ * w_);
  }

  Plane plane(std::size_t c) const {
    auto ch = channel(c);
    return Plane(h_, w_, std::vector<double>(ch.begin(), ch.end()));
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool same_shape(const Tensor3& o) const { return c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  bool operator==(const Tensor3&) const = default;

 private:
  std::size_t c_ = 0;
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<double> data_;
};

/// Image in C×H×W layout, RGB channel order, entries in [0,1] after preprocessing.
using ImageTensor = Tensor3;

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// Throws ValidationError unless the tensor is non-empty and finite.
inline void validate_image(const Tensor3& t, const std::string& what) {
  if (t.channels() == 0 || t.height() == 0 || t.width() == 0) {
    throw ValidationError(what + ": empty tensor");
  }
  if (!all_finite(t.values())) {
    throw ValidationError(what + ": non-finite entry");
  }
}

}  // namespace trinity
