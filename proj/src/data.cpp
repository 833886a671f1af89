#include "trinity/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "trinity/image_io.hpp"
#include "trinity/spectral.hpp"

namespace trinity::data {

namespace fs = std::filesystem;

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string format_number(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e9) return std::to_string(static_cast<long long>(v));
  std::ostringstream os;
  os << v;
  return os.str();
}

// Half-sample symmetric reflection: ... b a | a b c ... c | c b ...
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - 1 - m;
  return static_cast<std::size_t>(m);
}

constexpr std::array<const char*, 6> kHueNames = {"red", "yellow", "green", "cyan", "blue", "magenta"};

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (double& ch : rgb) ch += m;
  return rgb;
}

}  // namespace

const char* to_string(Label l) { return l == Label::Real ? "real" : "fake"; }

std::optional<Label> label_from_string(const std::string& s) {
  if (s == "real") return Label::Real;
  if (s == "fake") return Label::Fake;
  return std::nullopt;
}

// --- manifest -----------------------------------------------------------------

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");

  fs::path base = path.parent_path();
  if (const char* root = std::getenv(kDataRootEnv); root != nullptr && *root != '\0') base = root;

  Manifest m;
  std::vector<std::string> errors;
  std::vector<std::string> missing;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      errors.push_back(where + "invalid JSON (" + e.what() + ")");
      continue;
    }
    if (!j.is_object()) {
      errors.push_back(where + "expected a JSON object");
      continue;
    }
    bool ok = true;
    for (const char* key : {"image_path", "caption", "label", "generator"}) {
      if (!j.contains(key) || !j.at(key).is_string()) {
        errors.push_back(where + "missing or non-string field '" + key + "'");
        ok = false;
      }
    }
    if (!ok) continue;
    ManifestEntry e;
    e.image_path = j.at("image_path").get<std::string>();
    e.caption = j.at("caption").get<std::string>();
    e.generator = j.at("generator").get<std::string>();
    const auto label_text = j.at("label").get<std::string>();
    const auto label = label_from_string(label_text);
    if (!label) {
      errors.push_back(where + "unknown label '" + label_text + "' (expected real or fake)");
      continue;
    }
    e.label = *label;
    if (e.label == Label::Real && e.generator != "real" && e.generator != "toy-real") {
      errors.push_back(where + "label real requires generator 'real' or 'toy-real', got '" +
                       e.generator + "'");
      continue;
    }
    fs::path p(e.image_path);
    e.resolved_path = p.is_absolute() ? p : base / p;
    if (!fs::exists(e.resolved_path)) {
      missing.push_back(where + e.resolved_path.string());
    }
    m.entries.push_back(std::move(e));
  }
  if (!errors.empty() || !missing.empty()) {
    std::string msg = "manifest '" + path.string() + "' rejected:";
    for (const auto& e : errors) msg += "\n  " + e;
    if (!missing.empty()) {
      msg += "\n  unresolvable image paths:";
      for (const auto& p : missing) msg += "\n    " + p;
    }
    throw DataError(msg);
  }
  if (m.entries.empty()) m.warnings.push_back("manifest '" + path.string() + "' is empty");
  return m;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["image_path"] = e.image_path;
    j["caption"] = e.caption;
    j["label"] = to_string(e.label);
    j["generator"] = e.generator;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for manifest '" + path.string() + "'");
}

// --- preprocessing ------------------------------------------------------------

ImageTensor resize_bilinear(const ImageTensor& img, std::size_t height, std::size_t width) {
  if (img.height() == height && img.width() == width) return img;
  if (height == 0 || width == 0) throw ValidationError("resize: target must be non-empty");
  ImageTensor out(img.channels(), height, width);
  const double sy = static_cast<double>(img.height()) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width()) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height() - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width() - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels(); ++c) {
        const double top = img(c, y0, x0) * (1 - tx) + img(c, y0, x1) * tx;
        const double bot = img(c, y1, x0) * (1 - tx) + img(c, y1, x1) * tx;
        out(c, y, x) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

ImageTensor preprocess(std::span<const std::uint8_t> bytes, const PreprocessConfig& cfg) {
  const io::Rgb8 raster = io::decode_image(bytes);
  return resize_bilinear(io::to_tensor(raster), cfg.height, cfg.width);
}

// --- perturbations ------------------------------------------------------------

void PerturbationSpec::validate() const {
  switch (kind) {
    case Kind::None: return;
    case Kind::Jpeg:
      if (quality < 1 || quality > 100) {
        throw ValidationError("jpeg perturbation: quality must be in 1..100, got " +
                              std::to_string(quality));
      }
      return;
    case Kind::GaussianBlur:
      if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw ValidationError("gaussian_blur perturbation: sigma must be positive and finite");
      }
      return;
  }
}

std::string PerturbationSpec::column_name() const {
  switch (kind) {
    case Kind::None: return "Ori";
    case Kind::Jpeg: return "JPEG" + std::to_string(quality);
    case Kind::GaussianBlur: return "Gauss" + format_number(sigma);
  }
  return "?";
}

std::string PerturbationSpec::token() const {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::Jpeg: return "jpeg" + std::to_string(quality);
    case Kind::GaussianBlur: return "blur" + format_number(sigma);
  }
  return "?";
}

PerturbationSpec parse_perturbation(const std::string& token) {
  auto number_after = [&](std::size_t prefix) -> std::string {
    const std::string rest = token.substr(prefix);
    if (rest.empty()) throw ValidationError("perturbation '" + token + "' lacks a parameter");
    return rest;
  };
  PerturbationSpec spec;
  try {
    if (token == "none" || token == "ori" || token == "Ori") {
      spec = PerturbationSpec::none();
    } else if (token.rfind("jpeg", 0) == 0) {
      std::size_t used = 0;
      const std::string s = number_after(4);
      spec = PerturbationSpec::jpeg(std::stoi(s, &used));
      if (used != s.size()) throw ValidationError("bad JPEG quality in '" + token + "'");
    } else if (token.rfind("blur", 0) == 0) {
      std::size_t used = 0;
      const std::string s = number_after(4);
      spec = PerturbationSpec::blur(std::stod(s, &used));
      if (used != s.size()) throw ValidationError("bad blur sigma in '" + token + "'");
    } else {
      throw ValidationError("unknown perturbation '" + token + "' (none, jpeg<q>, blur<sigma>)");
    }
  } catch (const std::logic_error&) {
    throw ValidationError("cannot parse perturbation '" + token + "'");
  }
  spec.validate();
  return spec;
}

std::vector<PerturbationSpec> default_grid() {
  return {PerturbationSpec::none(), PerturbationSpec::jpeg(80), PerturbationSpec::jpeg(50),
          PerturbationSpec::blur(1.0), PerturbationSpec::blur(2.0)};
}

ImageTensor gaussian_blur(const ImageTensor& img, double sigma) {
  PerturbationSpec::blur(sigma).validate();
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double w = std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = w;
    total += w;
  }
  for (double& w : kernel) w /= total;

  const std::size_t H = img.height(), W = img.width();
  ImageTensor tmp(img.channels(), H, W);
  ImageTensor out(img.channels(), H, W);
  for (std::size_t c = 0; c < img.channels(); ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 img(c, y, reflect_index(static_cast<std::ptrdiff_t>(x) + k, W));
        }
        tmp(c, y, x) = acc;
      }
    }
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 tmp(c, reflect_index(static_cast<std::ptrdiff_t>(y) + k, H), x);
        }
        out(c, y, x) = acc;
      }
    }
  }
  return out;
}

ImageTensor perturb(const ImageTensor& img, const PerturbationSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case PerturbationSpec::Kind::None:
      return img;
    case PerturbationSpec::Kind::Jpeg: {
      const auto bytes = io::encode_jpeg(io::to_rgb8(img), spec.quality);
      return io::to_tensor(io::decode_image(bytes));
    }
    case PerturbationSpec::Kind::GaussianBlur:
      return gaussian_blur(img, spec.sigma);
  }
  return img;
}

// --- toy dataset --------------------------------------------------------------

void ToyGenConfig::validate() const {
  if (count_per_class < 1) throw ConfigError("toy: count per class must be >= 1");
  if (size < 16) throw ConfigError("toy: image size must be >= 16");
  if (size % 2 != 0) throw ConfigError("toy: image size must be even for 2x up-sampling");
  if (artifact != "upsample2x") throw ConfigError("toy: unsupported artifact mode '" + artifact + "'");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("toy: holdout_fraction must be in [0, 1)");
  }
  if (!std::isfinite(spectral_exponent)) throw ConfigError("toy: spectral exponent must be finite");
}

nlohmann::json to_json(const ToyGenConfig& cfg) {
  return {{"count_per_class", cfg.count_per_class},
          {"size", cfg.size},
          {"spectral_exponent", cfg.spectral_exponent},
          {"artifact", cfg.artifact},
          {"seed", cfg.seed},
          {"holdout_fraction", cfg.holdout_fraction}};
}

ToyGenConfig toy_config_from_json(const nlohmann::json& j) {
  ToyGenConfig cfg;
  cfg.count_per_class = j.value("count_per_class", cfg.count_per_class);
  cfg.size = j.value("size", cfg.size);
  cfg.spectral_exponent = j.value("spectral_exponent", cfg.spectral_exponent);
  cfg.artifact = j.value("artifact", cfg.artifact);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.holdout_fraction = j.value("holdout_fraction", cfg.holdout_fraction);
  cfg.validate();
  return cfg;
}

Plane toy_texture(std::size_t size, double exponent, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  spectral::DctSpectrum spec{Plane(size, size), spectral::Convention::Orthonormal};
  for (std::size_t u = 0; u < size; ++u) {
    for (std::size_t v = 0; v < size; ++v) {
      const double r = std::sqrt(static_cast<double>(u * u + v * v));
      const double g = gauss(rng);
      spec.coeffs(u, v) = (u == 0 && v == 0) ? 0.0 : g / std::pow(1.0 + r, exponent);
    }
  }
  Plane tex = spectral::idct2(spec);
  double mean = 0.0;
  for (double v : tex.values()) mean += v;
  mean /= static_cast<double>(tex.size());
  double var = 0.0;
  for (double v : tex.values()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(tex.size()));
  for (double& v : tex.values()) v = (v - mean) / sd;
  return tex;
}

Plane upsample_artifact(const Plane& texture) {
  Plane out(texture.rows(), texture.cols());
  for (std::size_t y = 0; y + 1 < texture.rows(); y += 2) {
    for (std::size_t x = 0; x + 1 < texture.cols(); x += 2) {
      const double avg = 0.25 * (texture(y, x) + texture(y, x + 1) + texture(y + 1, x) +
                                 texture(y + 1, x + 1));
      out(y, x) = out(y, x + 1) = out(y + 1, x) = out(y + 1, x + 1) = avg;
    }
  }
  return out;
}

ToySample toy_sample(const ToyGenConfig& cfg, Label label, std::size_t index) {
  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(label)), index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double hue = 360.0 * unit(rng);
  const std::uint64_t tex_seed = rng();
  Plane lum = toy_texture(cfg.size, cfg.spectral_exponent, tex_seed);
  if (label == Label::Fake) lum = upsample_artifact(lum);
  const auto base = hsv_to_rgb(hue, 0.5, 0.6);
  constexpr double kContrast = 0.12;

  ToySample s;
  s.image = ImageTensor(3, cfg.size, cfg.size);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < cfg.size; ++y) {
      for (std::size_t x = 0; x < cfg.size; ++x) {
        s.image(c, y, x) = std::clamp(base[c] + kContrast * lum(y, x), 0.0, 1.0);
      }
    }
  }
  const auto bucket = std::min<std::size_t>(static_cast<std::size_t>(hue / 60.0), 5);
  s.caption = std::string("a ") + kHueNames[bucket] + " noise texture";
  return s;
}

ToyDatasetPaths generate_toy_dataset(const ToyGenConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir.string() + "': " + ec.message());

  const auto n_test = static_cast<std::size_t>(
      std::llround(cfg.holdout_fraction * static_cast<double>(cfg.count_per_class)));
  std::vector<ManifestEntry> all, train, test;
  for (std::size_t i = 0; i < cfg.count_per_class; ++i) {
    for (Label label : {Label::Real, Label::Fake}) {
      ToySample s = toy_sample(cfg, label, i);
      char name[64];
      std::snprintf(name, sizeof name, "images/%s_%05zu.png", to_string(label), i);
      io::write_file(out_dir / name, io::encode_png(io::to_rgb8(s.image)));
      ManifestEntry e;
      e.image_path = name;
      e.caption = s.caption;
      e.label = label;
      e.generator = label == Label::Real ? "toy-real" : "toy";
      all.push_back(e);
      (i + n_test >= cfg.count_per_class ? test : train).push_back(e);
    }
  }
  ToyDatasetPaths paths;
  paths.manifest = out_dir / "manifest.jsonl";
  write_manifest(paths.manifest, all);
  if (cfg.holdout_fraction > 0.0) {
    paths.train = out_dir / "train.jsonl";
    paths.test = out_dir / "test.jsonl";
    write_manifest(*paths.train, train);
    write_manifest(*paths.test, test);
  }
  return paths;
}

// --- band-energy oracle -------------------------------------------------------

double high_band_energy_ratio(const ImageTensor& img) {
  validate_image(img, "high_band_energy_ratio");
  Plane lum(img.height(), img.width());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    const auto ch = img.channel(c);
    for (std::size_t k = 0; k < ch.size(); ++k) lum.raw()[k] += ch[k];
  }
  for (double& v : lum.values()) v /= static_cast<double>(img.channels());
  const auto spec = spectral::dct2(lum);
  double total = 0.0, high = 0.0;
  for (std::size_t u = 0; u < lum.rows(); ++u) {
    for (std::size_t v = 0; v < lum.cols(); ++v) {
      if (u == 0 && v == 0) continue;
      const double e = spec.coeffs(u, v) * spec.coeffs(u, v);
      total += e;
      if (2 * u >= lum.rows() || 2 * v >= lum.cols()) high += e;
    }
  }
  // AC energy at round-off level relative to DC means a flat image.
  const double dc = spec.coeffs(0, 0) * spec.coeffs(0, 0);
  return total > 1e-20 * (dc + 1e-300) ? high / total : 0.0;
}

Label ThresholdOracle::predict(double stat) const {
  return (stat - threshold) * direction >= 0.0 ? Label::Fake : Label::Real;
}

ThresholdOracle ThresholdOracle::fit(const std::vector<double>& stats,
                                     const std::vector<Label>& labels) {
  if (stats.size() != labels.size() || stats.empty()) {
    throw ValidationError("ThresholdOracle::fit: need matching non-empty inputs");
  }
  std::vector<std::size_t> order(stats.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return stats[a] < stats[b]; });
  const auto n_fake = static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), Label::Fake));
  const std::size_t n = stats.size();

  ThresholdOracle best;
  std::size_t best_correct = 0;
  // Threshold just below sorted position k: indices < k predicted one way.
  std::size_t fake_below = 0;
  for (std::size_t k = 0; k <= n; ++k) {
    if (k > 0 && k < n && stats[order[k]] == stats[order[k - 1]]) {
      if (labels[order[k]] == Label::Fake) ++fake_below;
      continue;
    }
    const double thr = k == 0 ? stats[order[0]] - 1.0
                     : k == n ? stats[order[n - 1]] + 1.0
                              : 0.5 * (stats[order[k - 1]] + stats[order[k]]);
    const std::size_t real_below = k - fake_below;
    // direction +1: fake iff stat >= thr.
    const std::size_t up = real_below + (n_fake - fake_below);
    // direction -1: fake iff stat <= thr.
    const std::size_t down = fake_below + ((n - n_fake) - real_below);
    if (up > best_correct) {
      best_correct = up;
      best = {thr, 1.0};
    }
    if (down > best_correct) {
      best_correct = down;
      best = {thr, -1.0};
    }
    if (k < n && labels[order[k]] == Label::Fake) ++fake_below;
  }
  return best;
}

double ThresholdOracle::accuracy(const std::vector<double>& stats,
                                 const std::vector<Label>& labels) const {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < stats.size(); ++i) correct += predict(stats[i]) == labels[i];
  return stats.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(stats.size());
}

}  // namespace trinity::data
