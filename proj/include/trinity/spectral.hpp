#pragma once

#include <compare>
#include <cstddef>
#include <vector>

#include "trinity/tensor.hpp"

namespace trinity::spectral {

/// Scaling convention for the 2D DCT-II.
///
/// `Orthonormal` multiplies each axis by c(0)=sqrt(1/N), c(k>0)=sqrt(2/N), so the
/// basis is orthonormal and the inverse is the transpose. `Unnormalized` uses the
/// bare cosine products with no weighting; its inverse (a plain 1/H-scaled
/// double sum) is kept for reference and does not reconstruct the input.
enum class Convention { Orthonormal, Unnormalized };

const char* to_string(Convention c);

/// Frequency pair (u, v): u indexes rows (height), v indexes columns (width).
struct BasisIndex {
  std::size_t u = 0;
  std::size_t v = 0;
  auto operator<=>(const BasisIndex&) const = default;
};

struct DctSpectrum {
  Plane coeffs;
  Convention convention = Convention::Orthonormal;
};

/// N×N matrix M with M(k, i) = scale(k) * cos(pi * k * (i + 1/2) / N).
Plane dct_matrix(std::size_t n, Convention convention);

/// Basis image B^{u,v} of size H×W. Throws IndexError for u >= H or v >= W.
Plane dct_basis(std::size_t height, std::size_t width, BasisIndex idx,
                Convention convention = Convention::Orthonormal);

/// Forward 2D DCT-II via separable matrix products. Throws ValidationError on
/// empty or non-finite input.
DctSpectrum dct2(const Plane& x, Convention convention = Convention::Orthonormal);

/// Per-channel forward transform of a C×H×W tensor.
std::vector<DctSpectrum> dct2(const Tensor3& x, Convention convention = Convention::Orthonormal);

/// Inverse transform. `convention` must match the spectrum's tag, otherwise a
/// ContractError is raised.
Plane idct2(const DctSpectrum& f, Convention convention = Convention::Orthonormal);

/// Projection of every channel of `x` onto B^{u,v}: out[c] = sum_{h,w} x[c,h,w] B[h,w].
std::vector<double> freq_component(const Tensor3& x, BasisIndex idx,
                                   Convention convention = Convention::Orthonormal);

}  // namespace trinity::spectral
