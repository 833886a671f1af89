#include "trinity/spectral.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace trinity::spectral {

namespace {

double axis_scale(std::size_t k, std::size_t n, Convention convention) {
  if (convention == Convention::Unnormalized) return 1.0;
  const double nd = static_cast<double>(n);
  return k == 0 ? std::sqrt(1.0 / nd) : std::sqrt(2.0 / nd);
}

// out = a * b, with a (m×k) and b (k×n).
Plane matmul(const Plane& a, const Plane& b) {
  Plane out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Plane transpose(const Plane& a) {
  Plane t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

void check_plane(const Plane& x, const char* what) {
  if (x.rows() == 0 || x.cols() == 0) throw ValidationError(std::string(what) + ": empty plane");
  if (!all_finite(x.values())) throw ValidationError(std::string(what) + ": non-finite entry");
}

}  // namespace

const char* to_string(Convention c) {
  return c == Convention::Orthonormal ? "orthonormal" : "unnormalized";
}

Plane dct_matrix(std::size_t n, Convention convention) {
  Plane m(n, n);
  const double nd = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double s = axis_scale(k, n, convention);
    for (std::size_t i = 0; i < n; ++i) {
      m(k, i) = s * std::cos(std::numbers::pi * static_cast<double>(k) *
                             (static_cast<double>(i) + 0.5) / nd);
    }
  }
  return m;
}

Plane dct_basis(std::size_t height, std::size_t width, BasisIndex idx, Convention convention) {
  if (height == 0 || width == 0) throw ValidationError("dct_basis: empty plane size");
  if (idx.u >= height || idx.v >= width) {
    throw IndexError("dct_basis: index (" + std::to_string(idx.u) + "," + std::to_string(idx.v) +
                     ") out of range for " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  const double su = axis_scale(idx.u, height, convention);
  const double sv = axis_scale(idx.v, width, convention);
  std::vector<double> row(height);
  std::vector<double> col(width);
  for (std::size_t i = 0; i < height; ++i) {
    row[i] = su * std::cos(std::numbers::pi * static_cast<double>(idx.u) *
                           (static_cast<double>(i) + 0.5) / static_cast<double>(height));
  }
  for (std::size_t j = 0; j < width; ++j) {
    col[j] = sv * std::cos(std::numbers::pi * static_cast<double>(idx.v) *
                           (static_cast<double>(j) + 0.5) / static_cast<double>(width));
  }
  Plane b(height, width);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) b(i, j) = row[i] * col[j];
  }
  return b;
}

DctSpectrum dct2(const Plane& x, Convention convention) {
  check_plane(x, "dct2");
  const Plane rows = dct_matrix(x.rows(), convention);
  const Plane cols = dct_matrix(x.cols(), convention);
  return {matmul(matmul(rows, x), transpose(cols)), convention};
}

std::vector<DctSpectrum> dct2(const Tensor3& x, Convention convention) {
  std::vector<DctSpectrum> out;
  out.reserve(x.channels());
  for (std::size_t c = 0; c < x.channels(); ++c) out.push_back(dct2(x.plane(c), convention));
  return out;
}

Plane idct2(const DctSpectrum& f, Convention convention) {
  if (f.convention != convention) {
    throw ContractError(std::string("idct2: spectrum is ") + to_string(f.convention) +
                        " but inverse requested as " + to_string(convention));
  }
  check_plane(f.coeffs, "idct2");
  const Plane rows = dct_matrix(f.coeffs.rows(), convention);
  const Plane cols = dct_matrix(f.coeffs.cols(), convention);
  Plane x = matmul(matmul(transpose(rows), f.coeffs), cols);
  if (convention == Convention::Unnormalized) {
    // Literal form: x = (1/H) * sum f B. Not an exact inverse.
    const double s = 1.0 / static_cast<double>(f.coeffs.rows());
    for (double& v : x.values()) v *= s;
  }
  return x;
}

std::vector<double> freq_component(const Tensor3& x, BasisIndex idx, Convention convention) {
  if (x.channels() == 0 || x.height() == 0 || x.width() == 0) {
    throw ValidationError("freq_component: empty input");
  }
  const Plane b = dct_basis(x.height(), x.width(), idx, convention);
  std::vector<double> out(x.channels(), 0.0);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const auto ch = x.channel(c);
    double acc = 0.0;
    for (std::size_t k = 0; k < ch.size(); ++k) acc += ch[k] * b.raw()[k];
    out[c] = acc;
  }
  return out;
}

}  // namespace trinity::spectral
