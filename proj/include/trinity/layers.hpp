#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "trinity/tensor.hpp"

// Small differentiable building blocks shared by the attention unit and the
// detector. Every forward has a matching backward that accumulates into the
// supplied gradient buffers.
namespace trinity::nn {

double sigmoid(double z);

/// Bin [start, end) covered by output cell `i` when pooling `in` cells to `out`.
struct PoolBin {
  std::size_t start;
  std::size_t end;
};
PoolBin adaptive_bin(std::size_t i, std::size_t in, std::size_t out);

Tensor3 adaptive_avg_pool(const Tensor3& x, std::size_t out_h, std::size_t out_w);
/// Gradient of adaptive_avg_pool w.r.t. its input, given the gradient at its output.
Tensor3 adaptive_avg_pool_backward(const Tensor3& d_out, std::size_t in_h, std::size_t in_w);

/// y = W x + b with W stored row-major as out×in.
std::vector<double> linear(std::span<const double> w, std::span<const double> b,
                           std::span<const double> x, std::size_t out);
/// Accumulates dW, db; returns dx.
std::vector<double> linear_backward(std::span<const double> w, std::span<const double> x,
                                    std::span<const double> d_y, std::span<double> d_w,
                                    std::span<double> d_b);

void relu_inplace(std::span<double> x);
/// Zeroes d where the forward activation was not positive.
void relu_backward_inplace(std::span<const double> activation, std::span<double> d);

/// 3×3 convolution, zero padding 1, configurable stride. Weights are
/// out×in×3×3 row-major.
struct Conv3x3 {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;

  std::size_t out_size(std::size_t n) const { return (n + 2 - 3) / stride + 1; }
  std::size_t weight_count() const { return out_channels * in_channels * 9; }

  Tensor3 forward(const Tensor3& x, std::span<const double> w, std::span<const double> b) const;
  /// Accumulates dW, db. Returns dx when `need_input_grad`, otherwise an empty tensor.
  Tensor3 backward(const Tensor3& x, std::span<const double> w, const Tensor3& d_y,
                   std::span<double> d_w, std::span<double> d_b, bool need_input_grad) const;
};

}  // namespace trinity::nn
