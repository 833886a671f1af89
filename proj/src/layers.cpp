#include "trinity/layers.hpp"

#include <cmath>
#include <limits>

namespace trinity::nn {

double sigmoid(double z) {
  // Clamp so the result stays strictly inside (0, 1) in double precision.
  constexpr double kLo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  double s;
  if (z >= 0) {
    s = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    s = e / (1.0 + e);
  }
  if (s < kLo) return kLo;
  if (s > hi) return hi;
  return s;
}

PoolBin adaptive_bin(std::size_t i, std::size_t in, std::size_t out) {
  const std::size_t start = (i * in) / out;
  const std::size_t end = ((i + 1) * in + out - 1) / out;
  return {start, end};
}

Tensor3 adaptive_avg_pool(const Tensor3& x, std::size_t out_h, std::size_t out_w) {
  if (x.height() == out_h && x.width() == out_w) return x;
  Tensor3 y(x.channels(), out_h, out_w);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (std::size_t i = 0; i < out_h; ++i) {
      const PoolBin bi = adaptive_bin(i, x.height(), out_h);
      for (std::size_t j = 0; j < out_w; ++j) {
        const PoolBin bj = adaptive_bin(j, x.width(), out_w);
        double acc = 0.0;
        for (std::size_t h = bi.start; h < bi.end; ++h) {
          for (std::size_t w = bj.start; w < bj.end; ++w) acc += x(c, h, w);
        }
        y(c, i, j) = acc / static_cast<double>((bi.end - bi.start) * (bj.end - bj.start));
      }
    }
  }
  return y;
}

Tensor3 adaptive_avg_pool_backward(const Tensor3& d_out, std::size_t in_h, std::size_t in_w) {
  if (d_out.height() == in_h && d_out.width() == in_w) return d_out;
  Tensor3 dx(d_out.channels(), in_h, in_w);
  for (std::size_t c = 0; c < d_out.channels(); ++c) {
    for (std::size_t i = 0; i < d_out.height(); ++i) {
      const PoolBin bi = adaptive_bin(i, in_h, d_out.height());
      for (std::size_t j = 0; j < d_out.width(); ++j) {
        const PoolBin bj = adaptive_bin(j, in_w, d_out.width());
        const double g = d_out(c, i, j) /
                         static_cast<double>((bi.end - bi.start) * (bj.end - bj.start));
        for (std::size_t h = bi.start; h < bi.end; ++h) {
          for (std::size_t w = bj.start; w < bj.end; ++w) dx(c, h, w) += g;
        }
      }
    }
  }
  return dx;
}

std::vector<double> linear(std::span<const double> w, std::span<const double> b,
                           std::span<const double> x, std::size_t out) {
  const std::size_t in = x.size();
  if (w.size() != out * in || b.size() != out) {
    throw ValidationError("linear: parameter shape mismatch");
  }
  std::vector<double> y(b.begin(), b.end());
  for (std::size_t o = 0; o < out; ++o) {
    const double* row = w.data() + o * in;
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] += acc;
  }
  return y;
}

std::vector<double> linear_backward(std::span<const double> w, std::span<const double> x,
                                    std::span<const double> d_y, std::span<double> d_w,
                                    std::span<double> d_b) {
  const std::size_t in = x.size();
  const std::size_t out = d_y.size();
  std::vector<double> dx(in, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double g = d_y[o];
    d_b[o] += g;
    if (g == 0.0) continue;
    const double* row = w.data() + o * in;
    double* drow = d_w.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) {
      drow[i] += g * x[i];
      dx[i] += g * row[i];
    }
  }
  return dx;
}

void relu_inplace(std::span<double> x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(std::span<const double> activation, std::span<double> d) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(activation[i] > 0.0)) d[i] = 0.0;
  }
}

Tensor3 Conv3x3::forward(const Tensor3& x, std::span<const double> w,
                         std::span<const double> b) const {
  if (x.channels() != in_channels) throw ValidationError("conv: input channel mismatch");
  if (w.size() != weight_count() || b.size() != out_channels) {
    throw ValidationError("conv: parameter shape mismatch");
  }
  const std::size_t H = x.height(), W = x.width();
  const std::size_t oh = out_size(H), ow = out_size(W);
  Tensor3 y(out_channels, oh, ow);
  for (std::size_t o = 0; o < out_channels; ++o) {
    auto yo = y.channel(o);
    for (double& v : yo) v = b[o];
    for (std::size_t ci = 0; ci < in_channels; ++ci) {
      const double* k = w.data() + (o * in_channels + ci) * 9;
      const auto xc = x.channel(ci);
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(i * stride + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          const double* xrow = xc.data() + static_cast<std::size_t>(sy) * W;
          double* yrow = yo.data() + i * ow;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const double kv = k[ky * 3 + kx];
            for (std::size_t j = 0; j < ow; ++j) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(j * stride + kx) - 1;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
              yrow[j] += kv * xrow[sx];
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor3 Conv3x3::backward(const Tensor3& x, std::span<const double> w, const Tensor3& d_y,
                          std::span<double> d_w, std::span<double> d_b,
                          bool need_input_grad) const {
  const std::size_t H = x.height(), W = x.width();
  const std::size_t oh = d_y.height(), ow = d_y.width();
  Tensor3 dx;
  if (need_input_grad) dx = Tensor3(in_channels, H, W);
  for (std::size_t o = 0; o < out_channels; ++o) {
    const auto go = d_y.channel(o);
    double gb = 0.0;
    for (double g : go) gb += g;
    d_b[o] += gb;
    for (std::size_t ci = 0; ci < in_channels; ++ci) {
      const double* k = w.data() + (o * in_channels + ci) * 9;
      double* dk = d_w.data() + (o * in_channels + ci) * 9;
      const auto xc = x.channel(ci);
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(i * stride + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          const double* xrow = xc.data() + static_cast<std::size_t>(sy) * W;
          const double* grow = go.data() + i * ow;
          double* dxrow = need_input_grad
                              ? dx.channel(ci).data() + static_cast<std::size_t>(sy) * W
                              : nullptr;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            double acc = 0.0;
            const double kv = k[ky * 3 + kx];
            for (std::size_t j = 0; j < ow; ++j) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(j * stride + kx) - 1;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
              acc += grow[j] * xrow[sx];
              if (dxrow) dxrow[sx] += grow[j] * kv;
            }
            dk[ky * 3 + kx] += acc;
          }
        }
      }
    }
  }
  return dx;
}

}  // namespace trinity::nn
