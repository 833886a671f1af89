#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "trinity/data.hpp"
#include "trinity/encoders.hpp"
#include "trinity/mcaf.hpp"
#include "trinity/tensor.hpp"

namespace trinity::fusion {

/// Which slots of the fused feature are switched off or substituted.
struct AblationFlags {
  bool disable_frequency = false;
  /// Text slot becomes the zero vector (absent caption).
  bool disable_caption = false;
  /// Dataset captions are replaced by the configured caption provider.
  bool caption_generated = false;

  bool operator==(const AblationFlags&) const = default;
};

enum class McafPlacement {
  /// Attention gates the output of the shallow convolutional extractor.
  FeatureMap,
  /// Attention gates the RGB input before the extractor.
  RawRgb,
};

struct DetectorConfig {
  std::size_t input_h = 64;
  std::size_t input_w = 64;
  /// Channels of the shallow extractor output.
  std::size_t channels = 16;
  McafPlacement placement = McafPlacement::FeatureMap;
  mcaf::MCAFConfig mcaf = mcaf::default_config(16);
  std::size_t freq_dim = 64;
  std::size_t head_hidden = 128;
  double threshold = 0.5;
  encoders::EncoderConfig encoder;
  AblationFlags ablation;

  std::size_t mcaf_channels() const { return placement == McafPlacement::RawRgb ? 3 : channels; }
  void validate() const;
};

nlohmann::json to_json(const DetectorConfig& cfg);
DetectorConfig detector_config_from_json(const nlohmann::json& j);

/// Trainable parameters of the detector. Also used as the gradient container.
struct DetectorParams {
  std::vector<double> conv1_w, conv1_b;  // 3 -> C, stride 2
  std::vector<double> conv2_w, conv2_b;  // C -> C, stride 2
  mcaf::MCAFState mcaf;
  std::vector<double> proj_w, proj_b;    // C -> D_f
  std::vector<double> head1_w, head1_b;  // D_total -> hidden
  std::vector<double> head2_w, head2_b;  // hidden -> 1

  template <class F>
  void for_each_param(F&& f) {
    f("extractor.conv1.weight", conv1_w);
    f("extractor.conv1.bias", conv1_b);
    f("extractor.conv2.weight", conv2_w);
    f("extractor.conv2.bias", conv2_b);
    mcaf.for_each_param("mcaf.", f);
    f("projection.weight", proj_w);
    f("projection.bias", proj_b);
    f("head.fc1.weight", head1_w);
    f("head.fc1.bias", head1_b);
    f("head.fc2.weight", head2_w);
    f("head.fc2.bias", head2_b);
  }
  template <class F>
  void for_each_param(F&& f) const {
    const_cast<DetectorParams*>(this)->for_each_param(
        [&](const std::string& name, std::vector<double>& v) { f(name, std::as_const(v)); });
  }

  DetectorParams zeros_like() const;
  std::size_t count() const;
  bool operator==(const DetectorParams&) const = default;
};

/// Configuration, parameters and frozen encoders.
struct DetectorModel {
  DetectorConfig config;
  DetectorParams params;
  mcaf::FrequencyIndexSet frequencies;
  encoders::EncoderSuite encoders;

  std::size_t text_dim() const { return encoders.text->dim(); }
  std::size_t image_dim() const { return encoders.image->dim(); }
  std::size_t fusion_dim() const { return text_dim() + image_dim() + config.freq_dim; }
};

/// Builds encoders from the config and draws initial parameters from `seed`.
DetectorModel make_model(const DetectorConfig& cfg, std::uint64_t seed);
/// Same as make_model but with every parameter zero.
DetectorModel make_zero_model(const DetectorConfig& cfg);
/// Throws ValidationError when parameter shapes disagree with the config.
void validate_model(const DetectorModel& model);

/// Frozen-encoder outputs for one sample; computed once and reused.
struct EmbeddedSample {
  ImageTensor image;
  std::vector<double> text;
  std::vector<double> image_embedding;
};

/// Applies the caption ablation flags to a dataset caption.
encoders::CaptionRecord effective_caption(const DetectorModel& model, const ImageTensor& img,
                                          const encoders::CaptionRecord& cap);
EmbeddedSample embed(const DetectorModel& model, const ImageTensor& img,
                     const encoders::CaptionRecord& cap);

/// Ordered [text | image | frequency] vector.
std::vector<double> fusion_feature(const DetectorModel& model, const EmbeddedSample& s);

double forward(const DetectorModel& model, const EmbeddedSample& s);
double forward(const DetectorModel& model, const ImageTensor& img,
               const encoders::CaptionRecord& cap);

/// Binary cross-entropy on a logit; label 1 = fake.
double loss(double logit, data::Label label);
double loss_grad(double logit, data::Label label);

/// Loss for one sample; parameter gradients are accumulated into `grads`.
double loss_and_grad(const DetectorModel& model, const EmbeddedSample& s, data::Label label,
                     DetectorParams& grads);

struct Prediction {
  data::Label label = data::Label::Real;
  double score = 0.0;
};

/// score = sigmoid(logit); fake iff score >= threshold.
Prediction predict_from_logit(double logit, double threshold);
Prediction predict(const DetectorModel& model, const ImageTensor& img,
                   const encoders::CaptionRecord& cap);

inline constexpr const char* kCheckpointTag = "trinity-ckpt-v1";

/// Single-file container: tag line, JSON snapshot, then named float64 arrays.
/// `extra` is stored alongside the detector config under "extra".
void save_checkpoint(const std::filesystem::path& path, const DetectorModel& model,
                     const nlohmann::json& extra = nlohmann::json::object());
struct LoadedCheckpoint {
  DetectorModel model;
  nlohmann::json snapshot;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace trinity::fusion
