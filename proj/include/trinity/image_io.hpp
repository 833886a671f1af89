#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "trinity/tensor.hpp"

namespace trinity::io {

/// Interleaved 8-bit RGB raster.
struct Rgb8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Rgb8&) const = default;
};

/// Decodes PNG or baseline/progressive JPEG, detected by signature. Any other
/// input raises DataError.
Rgb8 decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const Rgb8& img);
/// Baseline JPEG at the given quality (1..100), 4:2:0 chroma subsampling.
std::vector<std::uint8_t> encode_jpeg(const Rgb8& img, int quality);

/// Entries scaled to [0,1], channel order RGB.
ImageTensor to_tensor(const Rgb8& img);
/// Rounds to nearest and clamps to [0,255]. Requires a 3-channel tensor.
Rgb8 to_rgb8(const ImageTensor& t);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace trinity::io
