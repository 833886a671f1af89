#include "trinity/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "trinity/image_io.hpp"

namespace trinity::train {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (optimizer != "sgd" && optimizer != "adam") {
    throw ConfigError("train: optimizer must be 'sgd' or 'adam', got '" + optimizer + "'");
  }
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
  if (probe_size == 0) throw ConfigError("train: probe_size must be positive");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"seed", cfg.seed},
          {"optimizer", cfg.optimizer},
          {"momentum", cfg.momentum},
          {"weight_decay", cfg.weight_decay},
          {"probe_size", cfg.probe_size},
          {"ablation",
           {{"disable_frequency", cfg.ablation.disable_frequency},
            {"disable_caption", cfg.ablation.disable_caption},
            {"caption_generated", cfg.ablation.caption_generated}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  try {
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.optimizer = j.value("optimizer", cfg.optimizer);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.probe_size = j.value("probe_size", cfg.probe_size);
    const auto a = j.value("ablation", nlohmann::json::object());
    cfg.ablation.disable_frequency = a.value("disable_frequency", false);
    cfg.ablation.disable_caption = a.value("disable_caption", false);
    cfg.ablation.caption_generated = a.value("caption_generated", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<LabeledImage> load_dataset(const data::Manifest& manifest,
                                       const data::PreprocessConfig& pre) {
  std::vector<LabeledImage> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    LabeledImage li;
    try {
      li.image = data::preprocess(io::read_file(e.resolved_path), pre);
    } catch (const Error& err) {
      throw DataError("'" + e.image_path + "': " + err.what());
    }
    li.caption = {e.caption, encoders::CaptionSource::Dataset};
    li.label = e.label;
    out.push_back(std::move(li));
  }
  return out;
}

Optimizer::Optimizer(const TrainConfig& cfg, const fusion::DetectorParams& shape) : cfg_(cfg) {
  shape.for_each_param([this](const std::string&, const std::vector<double>& v) {
    m_.emplace_back(v.size(), 0.0);
    v_.emplace_back(cfg_.optimizer == "adam" ? v.size() : 0, 0.0);
  });
}

void Optimizer::step(fusion::DetectorParams& params, const fusion::DetectorParams& grads) {
  ++t_;
  std::vector<const std::vector<double>*> g;
  grads.for_each_param([&g](const std::string&, const std::vector<double>& v) { g.push_back(&v); });
  std::size_t k = 0;
  params.for_each_param([&](const std::string&, std::vector<double>& p) {
    const auto& gk = *g[k];
    auto& m = m_[k];
    if (cfg_.optimizer == "adam") {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      auto& v = v_[k];
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = gk[i] + cfg_.weight_decay * p[i];
        m[i] = b1 * m[i] + (1 - b1) * gi;
        v[i] = b2 * v[i] + (1 - b2) * gi * gi;
        p[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    } else {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = gk[i] + cfg_.weight_decay * p[i];
        m[i] = cfg_.momentum * m[i] + gi;
        p[i] -= cfg_.learning_rate * m[i];
      }
    }
    ++k;
  });
}

double mean_loss(const fusion::DetectorModel& model,
                 const std::vector<fusion::EmbeddedSample>& samples,
                 const std::vector<data::Label>& labels) {
  double acc = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    acc += fusion::loss(fusion::forward(model, samples[i]), labels[i]);
  }
  return samples.empty() ? 0.0 : acc / static_cast<double>(samples.size());
}

TrainResult train(const std::vector<LabeledImage>& dataset, fusion::DetectorConfig detector,
                  const TrainConfig& tc, const std::function<void(const EpochInfo&)>& on_epoch) {
  tc.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  const bool has_real = std::any_of(dataset.begin(), dataset.end(),
                                    [](const auto& s) { return s.label == data::Label::Real; });
  const bool has_fake = std::any_of(dataset.begin(), dataset.end(),
                                    [](const auto& s) { return s.label == data::Label::Fake; });
  if (!has_real || !has_fake) throw ConfigError("train: dataset must contain both real and fake samples");

  detector.ablation = tc.ablation;
  TrainResult result{fusion::make_model(detector, tc.seed), 0.0, 0.0, {}};
  fusion::DetectorModel& model = result.model;

  // Encoders are frozen, so embeddings are computed once.
  std::vector<fusion::EmbeddedSample> samples;
  std::vector<data::Label> labels;
  samples.reserve(dataset.size());
  for (const auto& item : dataset) {
    samples.push_back(fusion::embed(model, item.image, item.caption));
    labels.push_back(item.label);
  }
  const std::size_t n_probe = std::min(tc.probe_size, samples.size());
  const std::vector<fusion::EmbeddedSample> probe(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_probe));
  const std::vector<data::Label> probe_labels(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_probe));
  result.initial_probe_loss = mean_loss(model, probe, probe_labels);

  Optimizer opt(tc, model.params);
  std::mt19937_64 shuffle_rng(tc.seed ^ 0x5f3759dfULL);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(start + tc.batch_size, order.size());
      fusion::DetectorParams grads = model.params.zeros_like();
      for (std::size_t i = start; i < end; ++i) {
        epoch_loss += fusion::loss_and_grad(model, samples[order[i]], labels[order[i]], grads);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      grads.for_each_param([scale](const std::string&, std::vector<double>& v) {
        for (double& x : v) x *= scale;
      });
      opt.step(model.params, grads);
    }
    EpochInfo info{epoch, epoch_loss / static_cast<double>(order.size()),
                   mean_loss(model, probe, probe_labels)};
    result.epochs.push_back(info);
    if (on_epoch) on_epoch(info);
  }
  result.final_probe_loss = result.epochs.back().probe_loss;
  return result;
}

}  // namespace trinity::train
