#include "trinity/train.hpp"

#include <gtest/gtest.h>

#include "trinity/image_io.hpp"

using namespace trinity;
using namespace trinity::train;
using data::Label;

namespace {

std::vector<LabeledImage> toy_set(std::size_t per_class, std::size_t size) {
  data::ToyGenConfig g;
  g.size = size;
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (auto l : {Label::Real, Label::Fake}) {
      auto s = data::toy_sample(g, l, i);
      // Quantize as the PNG round trip would.
      out.push_back({io::to_tensor(io::to_rgb8(s.image)),
                     {s.caption, encoders::CaptionSource::Dataset}, l});
    }
  }
  return out;
}

fusion::DetectorConfig small_detector(std::size_t size) {
  fusion::DetectorConfig cfg;
  cfg.input_h = cfg.input_w = size;
  cfg.channels = 8;
  cfg.mcaf = mcaf::default_config(8);
  cfg.freq_dim = 16;
  cfg.head_hidden = 16;
  return cfg;
}

TrainConfig fast_config() {
  TrainConfig tc;
  tc.optimizer = "adam";
  tc.learning_rate = 3e-3;
  tc.batch_size = 8;
  tc.epochs = 4;
  tc.probe_size = 16;
  return tc;
}

}  // namespace

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig tc;
  EXPECT_NO_THROW(tc.validate());
  EXPECT_EQ(tc.optimizer, "sgd");
  tc.learning_rate = 0.0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = {};
  tc.optimizer = "rmsprop";
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = {};
  tc.momentum = 1.0;
  EXPECT_THROW(tc.validate(), ConfigError);
  tc = fast_config();
  tc.ablation.disable_caption = true;
  const auto back = train_config_from_json(to_json(tc));
  EXPECT_EQ(to_json(back), to_json(tc));
  EXPECT_THROW(train_config_from_json({{"epochs", "many"}}), ConfigError);
}

TEST(Train, RejectsEmptyAndSingleClassData) {
  const auto det = small_detector(32);
  EXPECT_THROW(train::train({}, det, fast_config()), ConfigError);
  auto set = toy_set(4, 32);
  std::erase_if(set, [](const LabeledImage& x) { return x.label == Label::Fake; });
  EXPECT_THROW(train::train(set, det, fast_config()), ConfigError);
}

TEST(Train, ProbeLossDecreasesOnToyData) {
  const auto set = toy_set(24, 32);
  std::vector<EpochInfo> seen;
  const auto r = train::train(set, small_detector(32), fast_config(),
                       [&](const EpochInfo& e) { seen.push_back(e); });
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_EQ(r.epochs.size(), 4u);
  EXPECT_LT(r.final_probe_loss, r.initial_probe_loss);
  EXPECT_DOUBLE_EQ(r.final_probe_loss, seen.back().probe_loss);
}

TEST(Train, SgdStepReducesLossOnFixedBatch) {
  auto tc = fast_config();
  tc.optimizer = "sgd";
  tc.learning_rate = 0.05;
  tc.epochs = 2;
  const auto r = train::train(toy_set(8, 32), small_detector(32), tc);
  EXPECT_LT(r.final_probe_loss, r.initial_probe_loss);
}

TEST(Train, SameSeedGivesIdenticalParameters) {
  const auto set = toy_set(8, 32);
  auto tc = fast_config();
  tc.epochs = 2;
  const auto a = train::train(set, small_detector(32), tc);
  const auto b = train::train(set, small_detector(32), tc);
  EXPECT_EQ(a.model.params, b.model.params);
  tc.seed = 43;
  const auto c = train::train(set, small_detector(32), tc);
  EXPECT_NE(a.model.params, c.model.params);
}

TEST(Train, AblationFlagsFromTrainConfigWin) {
  auto tc = fast_config();
  tc.epochs = 1;
  tc.ablation.disable_frequency = true;
  const auto r = train::train(toy_set(4, 32), small_detector(32), tc);
  EXPECT_TRUE(r.model.config.ablation.disable_frequency);
  // Frequency branch receives no gradient when disabled.
  const auto init = fusion::make_model(r.model.config, tc.seed);
  EXPECT_EQ(r.model.params.conv1_w, init.params.conv1_w);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  auto tc = fast_config();
  tc.learning_rate = 0.01;
  fusion::DetectorParams p;
  p.head2_b = {1.0};
  fusion::DetectorParams g = p.zeros_like();
  g.head2_b = {5.0};
  Optimizer opt(tc, p);
  opt.step(p, g);
  EXPECT_NEAR(p.head2_b[0], 0.99, 1e-9);
}
