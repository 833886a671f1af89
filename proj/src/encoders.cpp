#include "trinity/encoders.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include "httplib.h"

#include "trinity/layers.hpp"

namespace trinity::encoders {

namespace {

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0) throw ValidationError("encoder: cannot normalize a zero vector");
  for (double& x : v) x /= n;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a ^ b.
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

nlohmann::json tensor_payload(const ImageTensor& img) {
  return {{"shape", {img.channels(), img.height(), img.width()}}, {"data", img.raw()}};
}

std::vector<double> embedding_from(const nlohmann::json& j, std::size_t dim) {
  if (!j.contains("embedding") || !j.at("embedding").is_array()) {
    throw EncoderUnavailable("external encoder: response lacks an 'embedding' array");
  }
  auto v = j.at("embedding").get<std::vector<double>>();
  if (v.size() != dim) {
    throw EncoderUnavailable("external encoder: embedding has dimension " +
                             std::to_string(v.size()) + ", expected " + std::to_string(dim));
  }
  if (!all_finite(v)) throw EncoderUnavailable("external encoder: non-finite embedding");
  normalize(v);
  return v;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// --- stub image encoder -------------------------------------------------------

StubImageEncoder::StubImageEncoder(std::uint64_t seed, std::size_t dim, std::size_t grid)
    : seed_(seed), dim_(dim), grid_(grid) {
  if (dim_ == 0 || grid_ == 0) throw ConfigError("stub image encoder: dim and grid must be positive");
}

std::vector<double> StubImageEncoder::pooled_statistics(const ImageTensor& img) const {
  const Tensor3 pooled = nn::adaptive_avg_pool(img, grid_, grid_);
  std::vector<double> s(pooled.raw().begin(), pooled.raw().end());
  s.push_back(1.0);
  return s;
}

ImageEmbedding StubImageEncoder::encode(const ImageTensor& img) const {
  validate_image(img, "stub image encoder");
  const auto stats = pooled_statistics(img);
  // The projection matrix depends on (seed, statistic count) only.
  std::mt19937_64 rng(mix(seed_, stats.size()));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(dim_, 0.0);
  for (std::size_t d = 0; d < dim_; ++d) {
    double acc = 0.0;
    for (double s : stats) acc += gauss(rng) * s;
    v[d] = acc;
  }
  normalize(v);
  return {std::move(v), Provenance::Stub};
}

// --- stub text encoder --------------------------------------------------------

StubTextEncoder::StubTextEncoder(std::uint64_t seed, std::size_t dim) : seed_(seed), dim_(dim) {
  if (dim_ == 0) throw ConfigError("stub text encoder: dim must be positive");
}

std::vector<double> StubTextEncoder::token_vector(const std::string& token) const {
  std::mt19937_64 rng(mix(seed_, fnv1a64(token)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> v(dim_);
  for (double& x : v) x = gauss(rng);
  return v;
}

TextEmbedding StubTextEncoder::encode(const CaptionRecord& cap) const {
  if (cap.source == CaptionSource::None) {
    return {std::vector<double>(dim_, 0.0), Provenance::Absent};
  }
  auto tokens = tokenize(cap.text);
  if (tokens.empty()) tokens.emplace_back("<empty>");
  std::vector<double> v(dim_, 0.0);
  for (const auto& t : tokens) {
    const auto tv = token_vector(t);
    for (std::size_t d = 0; d < dim_; ++d) v[d] += tv[d];
  }
  normalize(v);
  return {std::move(v), Provenance::Stub};
}

// --- caption providers --------------------------------------------------------

int ToyCaptionProvider::dominant_hue_bucket(const ImageTensor& img) {
  if (img.channels() != 3) throw ValidationError("toy caption provider: expected an RGB image");
  std::array<std::size_t, kBuckets> hist{};
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double r = img(0, y, x), g = img(1, y, x), b = img(2, y, x);
      const double mx = std::max({r, g, b});
      const double mn = std::min({r, g, b});
      const double d = mx - mn;
      double hue = 0.0;
      if (d > 0.0) {
        if (mx == r) {
          hue = 60.0 * std::fmod((g - b) / d, 6.0);
        } else if (mx == g) {
          hue = 60.0 * ((b - r) / d + 2.0);
        } else {
          hue = 60.0 * ((r - g) / d + 4.0);
        }
        if (hue < 0.0) hue += 360.0;
      }
      const int k = std::min(kBuckets - 1, static_cast<int>(hue / (360.0 / kBuckets)));
      ++hist[static_cast<std::size_t>(k)];
    }
  }
  return static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
}

CaptionRecord ToyCaptionProvider::caption(const ImageTensor& img) const {
  return {"synthetic texture class " + std::to_string(dominant_hue_bucket(img)),
          CaptionSource::Generated};
}

// --- external adapter ---------------------------------------------------------

ExternalClient::ExternalClient(std::string model_ref) : ref_(std::move(model_ref)) {
  std::string s = ref_;
  if (s.rfind("http://", 0) == 0) s = s.substr(7);
  while (!s.empty() && s.back() == '/') s.pop_back();
  const auto colon = s.rfind(':');
  if (s.empty()) throw ConfigError("external encoder: encoder.model_ref is empty");
  if (colon == std::string::npos) {
    host_ = s;
  } else {
    host_ = s.substr(0, colon);
    try {
      port_ = std::stoi(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("external encoder: bad port in model_ref '" + ref_ + "'");
    }
  }
}

nlohmann::json ExternalClient::get(const std::string& path) const {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5);
  auto res = cli.Get(path);
  if (!res || res->status != 200) {
    throw EncoderUnavailable("external encoder at '" + ref_ + "' unavailable (GET " + path + ")");
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw EncoderUnavailable("external encoder: malformed response: " + std::string(e.what()));
  }
}

nlohmann::json ExternalClient::post(const std::string& path, const nlohmann::json& body) const {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5);
  auto res = cli.Post(path, body.dump(), "application/json");
  if (!res || res->status != 200) {
    throw EncoderUnavailable("external encoder at '" + ref_ + "' unavailable (POST " + path + ")");
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw EncoderUnavailable("external encoder: malformed response: " + std::string(e.what()));
  }
}

ExternalImageEncoder::ExternalImageEncoder(std::shared_ptr<const ExternalClient> client,
                                           std::size_t dim)
    : client_(std::move(client)), dim_(dim) {}

ImageEmbedding ExternalImageEncoder::encode(const ImageTensor& img) const {
  validate_image(img, "external image encoder");
  return {embedding_from(client_->post("/embed/image", tensor_payload(img)), dim_),
          Provenance::External};
}

ExternalTextEncoder::ExternalTextEncoder(std::shared_ptr<const ExternalClient> client,
                                         std::size_t dim)
    : client_(std::move(client)), dim_(dim) {}

TextEmbedding ExternalTextEncoder::encode(const CaptionRecord& cap) const {
  if (cap.source == CaptionSource::None) {
    return {std::vector<double>(dim_, 0.0), Provenance::Absent};
  }
  return {embedding_from(client_->post("/embed/text", {{"text", cap.text}}), dim_),
          Provenance::External};
}

ExternalCaptionProvider::ExternalCaptionProvider(std::shared_ptr<const ExternalClient> client)
    : client_(std::move(client)) {}

CaptionRecord ExternalCaptionProvider::caption(const ImageTensor& img) const {
  const auto j = client_->post("/caption", tensor_payload(img));
  if (!j.contains("caption") || !j.at("caption").is_string()) {
    throw EncoderUnavailable("external caption provider: response lacks a 'caption' string");
  }
  return {j.at("caption").get<std::string>(), CaptionSource::Generated};
}

// --- configuration ------------------------------------------------------------

nlohmann::json to_json(const EncoderConfig& cfg) {
  return {{"backend", cfg.backend},
          {"model_ref", cfg.model_ref},
          {"seed", cfg.seed},
          {"stub_dim", cfg.stub_dim},
          {"caption_provider", cfg.caption_provider}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig cfg;
  cfg.backend = j.value("backend", cfg.backend);
  cfg.model_ref = j.value("model_ref", cfg.model_ref);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.stub_dim = j.value("stub_dim", cfg.stub_dim);
  cfg.caption_provider = j.value("caption_provider", cfg.caption_provider);
  if (cfg.backend != "stub" && cfg.backend != "external") {
    throw ConfigError("encoder.backend must be 'stub' or 'external', got '" + cfg.backend + "'");
  }
  if (cfg.caption_provider != "toy" && cfg.caption_provider != "external" &&
      cfg.caption_provider != "none") {
    throw ConfigError("encoder.caption_provider must be toy, external or none");
  }
  return cfg;
}

EncoderSuite make_encoders(const EncoderConfig& cfg) {
  EncoderSuite suite;
  std::shared_ptr<const ExternalClient> client;
  if (cfg.backend == "external" || cfg.caption_provider == "external") {
    client = std::make_shared<ExternalClient>(cfg.model_ref);
  }
  if (cfg.backend == "stub") {
    suite.image = std::make_shared<StubImageEncoder>(cfg.seed, cfg.stub_dim);
    suite.text = std::make_shared<StubTextEncoder>(cfg.seed ^ 0x7465787400000000ULL, cfg.stub_dim);
  } else if (cfg.backend == "external") {
    const auto info = client->get("/info");
    const auto text_dim = info.value("text_dim", std::size_t{0});
    const auto image_dim = info.value("image_dim", std::size_t{0});
    if (text_dim == 0 || image_dim == 0) {
      throw EncoderUnavailable("external encoder: /info did not report dimensions");
    }
    if (text_dim != image_dim) {
      throw ConfigError("external encoder: text_dim (" + std::to_string(text_dim) +
                        ") != image_dim (" + std::to_string(image_dim) +
                        "); a shared embedding space is required");
    }
    suite.image = std::make_shared<ExternalImageEncoder>(client, image_dim);
    suite.text = std::make_shared<ExternalTextEncoder>(client, text_dim);
  } else {
    throw ConfigError("unknown encoder backend '" + cfg.backend + "'");
  }
  if (cfg.caption_provider == "toy") {
    suite.captions = std::make_shared<ToyCaptionProvider>();
  } else if (cfg.caption_provider == "external") {
    suite.captions = std::make_shared<ExternalCaptionProvider>(client);
  } else {
    suite.captions = std::make_shared<NoCaptionProvider>();
  }
  return suite;
}

}  // namespace trinity::encoders
