#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "trinity/data.hpp"
#include "trinity/encoders.hpp"
#include "trinity/fusion.hpp"

namespace trinity::train {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 42;
  std::string optimizer = "sgd";  // "sgd" (with momentum) | "adam"
  double momentum = 0.9;
  double weight_decay = 0.0;
  /// Number of leading training samples forming the fixed probe batch.
  std::size_t probe_size = 64;
  fusion::AblationFlags ablation;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LabeledImage {
  ImageTensor image;
  encoders::CaptionRecord caption;
  data::Label label = data::Label::Real;
};

/// Decodes and preprocesses every manifest entry, in manifest order.
std::vector<LabeledImage> load_dataset(const data::Manifest& manifest,
                                       const data::PreprocessConfig& pre);

/// Parameter update rule over the flattened parameter list.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, const fusion::DetectorParams& shape);
  void step(fusion::DetectorParams& params, const fusion::DetectorParams& grads);

 private:
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct EpochInfo {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double probe_loss = 0.0;
};

struct TrainResult {
  fusion::DetectorModel model;
  double initial_probe_loss = 0.0;
  double final_probe_loss = 0.0;
  std::vector<EpochInfo> epochs;
};

/// Mean loss over `samples` with labels.
double mean_loss(const fusion::DetectorModel& model,
                 const std::vector<fusion::EmbeddedSample>& samples,
                 const std::vector<data::Label>& labels);

/// Mini-batch training with a seeded shuffle. The ablation flags of `tc`
/// override those in `detector`. Throws ConfigError for an empty or
/// single-class dataset.
TrainResult train(const std::vector<LabeledImage>& dataset, fusion::DetectorConfig detector,
                  const TrainConfig& tc,
                  const std::function<void(const EpochInfo&)>& on_epoch = {});

}  // namespace trinity::train
