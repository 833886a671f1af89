#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "trinity/tensor.hpp"

namespace trinity::data {

enum class Label { Real = 0, Fake = 1 };

const char* to_string(Label l);
/// Accepts exactly "real" or "fake".
std::optional<Label> label_from_string(const std::string& s);

struct ManifestEntry {
  std::string image_path;
  std::string caption;
  Label label = Label::Real;
  std::string generator;
  /// Absolute location after resolution; not serialized.
  std::filesystem::path resolved_path;

  bool operator==(const ManifestEntry& o) const {
    return image_path == o.image_path && caption == o.caption && label == o.label &&
           generator == o.generator;
  }
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> warnings;
};

/// Environment variable that overrides the directory relative image paths
/// are resolved against (default: the manifest's own directory).
inline constexpr const char* kDataRootEnv = "TRINITY_DATA_ROOT";

/// Reads a JSON-lines manifest with fields {image_path, caption, label,
/// generator}. Malformed lines are reported with 1-based line numbers; all
/// missing image files are listed in one DataError.
Manifest load_manifest(const std::filesystem::path& path);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

struct PreprocessConfig {
  std::size_t height = 64;
  std::size_t width = 64;
};

/// Decodes PNG/JPEG bytes, bilinearly resizes to the configured resolution
/// when needed, and returns an RGB tensor in [0,1]. Undecodable input raises
/// DataError.
ImageTensor preprocess(std::span<const std::uint8_t> bytes, const PreprocessConfig& cfg);

/// Bilinear resize with half-pixel centers.
ImageTensor resize_bilinear(const ImageTensor& img, std::size_t height, std::size_t width);

struct PerturbationSpec {
  enum class Kind { None, Jpeg, GaussianBlur };
  Kind kind = Kind::None;
  int quality = 0;     // jpeg
  double sigma = 0.0;  // gaussian_blur

  static PerturbationSpec none() { return {}; }
  static PerturbationSpec jpeg(int q) { return {Kind::Jpeg, q, 0.0}; }
  static PerturbationSpec blur(double s) { return {Kind::GaussianBlur, 0, s}; }

  void validate() const;
  /// Table column name: Ori, JPEG<q>, Gauss<sigma>.
  std::string column_name() const;
  /// Grid token: none, jpeg<q>, blur<sigma>.
  std::string token() const;
  bool operator==(const PerturbationSpec&) const = default;
};

PerturbationSpec parse_perturbation(const std::string& token);
/// {none, jpeg80, jpeg50, blur1, blur2}.
std::vector<PerturbationSpec> default_grid();

/// JPEG round trip through the baseline codec, Gaussian blur with kernel
/// radius ceil(3 sigma) and symmetric (edge-including) reflection, or identity.
ImageTensor perturb(const ImageTensor& img, const PerturbationSpec& spec);

ImageTensor gaussian_blur(const ImageTensor& img, double sigma);

struct ToyGenConfig {
  std::size_t count_per_class = 1000;
  std::size_t size = 64;
  /// Amplitude falls off as 1 / (1 + radius)^beta in the DCT domain.
  double spectral_exponent = 1.0;
  std::string artifact = "upsample2x";
  std::uint64_t seed = 7;
  /// Fraction of each class written to test.jsonl (train.jsonl gets the
  /// rest). Zero disables the split files.
  double holdout_fraction = 0.2;

  void validate() const;
};

nlohmann::json to_json(const ToyGenConfig& cfg);
ToyGenConfig toy_config_from_json(const nlohmann::json& j);

struct ToySample {
  ImageTensor image;
  std::string caption;
};

/// Luminance texture with a 1/f^beta spectrum, zero mean, unit variance.
Plane toy_texture(std::size_t size, double exponent, std::uint64_t seed);
/// 2×2 box average followed by 2× nearest-neighbour up-sampling.
Plane upsample_artifact(const Plane& texture);
/// One synthetic sample (before 8-bit quantization).
ToySample toy_sample(const ToyGenConfig& cfg, Label label, std::size_t index);

struct ToyDatasetPaths {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> train;
  std::optional<std::filesystem::path> test;
};

/// Writes PNGs under out_dir/images and manifest.jsonl (real and fake
/// interleaved), plus train.jsonl / test.jsonl when holdout_fraction > 0.
ToyDatasetPaths generate_toy_dataset(const ToyGenConfig& cfg, const std::filesystem::path& out_dir);

/// Fraction of AC energy of the luminance DCT-II spectrum that lies in the
/// upper half band (u >= H/2 or v >= W/2).
double high_band_energy_ratio(const ImageTensor& img);

/// One-dimensional threshold classifier: predicts fake when
/// (stat - threshold) * direction >= 0.
struct ThresholdOracle {
  double threshold = 0.0;
  double direction = 1.0;

  Label predict(double stat) const;
  /// Chooses the threshold and direction maximizing training accuracy.
  static ThresholdOracle fit(const std::vector<double>& stats, const std::vector<Label>& labels);
  double accuracy(const std::vector<double>& stats, const std::vector<Label>& labels) const;
};

}  // namespace trinity::data
