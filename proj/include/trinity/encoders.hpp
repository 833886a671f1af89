#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "trinity/tensor.hpp"

namespace trinity::encoders {

enum class Provenance { Stub, External, Absent };

struct TextEmbedding {
  std::vector<double> vector;
  Provenance provenance = Provenance::Stub;
};

struct ImageEmbedding {
  std::vector<double> vector;
  Provenance provenance = Provenance::Stub;
};

enum class CaptionSource { Dataset, Generated, None };

struct CaptionRecord {
  std::string text;
  CaptionSource source = CaptionSource::Dataset;

  static CaptionRecord none() { return {"", CaptionSource::None}; }
  bool operator==(const CaptionRecord&) const = default;
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual std::size_t dim() const = 0;
  /// Unit-norm embedding. Deterministic for a given encoder and input.
  virtual ImageEmbedding encode(const ImageTensor& img) const = 0;
};

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  /// Zero vector with Provenance::Absent for CaptionSource::None, otherwise unit norm.
  virtual TextEmbedding encode(const CaptionRecord& cap) const = 0;
};

class CaptionProvider {
 public:
  virtual ~CaptionProvider() = default;
  virtual CaptionRecord caption(const ImageTensor& img) const = 0;
};

/// Seeded random projection of per-cell mean intensities (grid×grid cells per
/// channel, plus a constant term), L2-normalized. Only block means reach the
/// embedding, so any zero-mean change inside a cell leaves it untouched.
class StubImageEncoder : public ImageEncoder {
 public:
  explicit StubImageEncoder(std::uint64_t seed, std::size_t dim = 64, std::size_t grid = 4);
  std::size_t dim() const override { return dim_; }
  ImageEmbedding encode(const ImageTensor& img) const override;

  /// Cell means in channel-major order followed by the constant 1.
  std::vector<double> pooled_statistics(const ImageTensor& img) const;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
  std::size_t grid_;
};

/// Sum of per-token Gaussian vectors, each seeded by a 64-bit FNV-1a hash of
/// the lower-cased token mixed with the encoder seed, then L2-normalized.
class StubTextEncoder : public TextEncoder {
 public:
  explicit StubTextEncoder(std::uint64_t seed, std::size_t dim = 64);
  std::size_t dim() const override { return dim_; }
  TextEmbedding encode(const CaptionRecord& cap) const override;

  std::vector<double> token_vector(const std::string& token) const;

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

std::uint64_t fnv1a64(const std::string& s);
std::vector<std::string> tokenize(const std::string& text);

/// Hue histogram over pixels (6 buckets of 60 degrees); caption is
/// "synthetic texture class k" for the most populated bucket k.
class ToyCaptionProvider : public CaptionProvider {
 public:
  static constexpr int kBuckets = 6;
  CaptionRecord caption(const ImageTensor& img) const override;
  static int dominant_hue_bucket(const ImageTensor& img);
};

class NoCaptionProvider : public CaptionProvider {
 public:
  CaptionRecord caption(const ImageTensor&) const override { return CaptionRecord::none(); }
};

/// Client for an out-of-process embedding service.
///
/// Wire contract (JSON over HTTP):
///   GET  /info          -> {"text_dim": int, "image_dim": int}
///   POST /embed/image   {"shape":[C,H,W], "data":[...]} -> {"embedding":[...]}
///   POST /embed/text    {"text": str}                   -> {"embedding":[...]}
///   POST /caption       {"shape":[C,H,W], "data":[...]} -> {"caption": str}
/// `model_ref` is "host:port" or "http://host:port". Any transport or protocol
/// failure raises EncoderUnavailable.
class ExternalClient {
 public:
  explicit ExternalClient(std::string model_ref);
  nlohmann::json get(const std::string& path) const;
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
  const std::string& model_ref() const { return ref_; }

 private:
  std::string ref_;
  std::string host_;
  int port_ = 80;
};

class ExternalImageEncoder : public ImageEncoder {
 public:
  ExternalImageEncoder(std::shared_ptr<const ExternalClient> client, std::size_t dim);
  std::size_t dim() const override { return dim_; }
  ImageEmbedding encode(const ImageTensor& img) const override;

 private:
  std::shared_ptr<const ExternalClient> client_;
  std::size_t dim_;
};

class ExternalTextEncoder : public TextEncoder {
 public:
  ExternalTextEncoder(std::shared_ptr<const ExternalClient> client, std::size_t dim);
  std::size_t dim() const override { return dim_; }
  TextEmbedding encode(const CaptionRecord& cap) const override;

 private:
  std::shared_ptr<const ExternalClient> client_;
  std::size_t dim_;
};

class ExternalCaptionProvider : public CaptionProvider {
 public:
  explicit ExternalCaptionProvider(std::shared_ptr<const ExternalClient> client);
  CaptionRecord caption(const ImageTensor& img) const override;

 private:
  std::shared_ptr<const ExternalClient> client_;
};

struct EncoderConfig {
  std::string backend = "stub";  // "stub" | "external"
  std::string model_ref;
  std::uint64_t seed = 1234;
  std::size_t stub_dim = 64;
  std::string caption_provider = "toy";  // "toy" | "external" | "none"
};

nlohmann::json to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

struct EncoderSuite {
  std::shared_ptr<const ImageEncoder> image;
  std::shared_ptr<const TextEncoder> text;
  std::shared_ptr<const CaptionProvider> captions;
};

/// Builds the configured backends. For the external backend the dimensions
/// come from the service's /info and must agree (shared embedding space).
EncoderSuite make_encoders(const EncoderConfig& cfg);

}  // namespace trinity::encoders
