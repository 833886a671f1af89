#include "trinity/data.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "support/oracles.hpp"
#include "support/tempdir.hpp"
#include "trinity/image_io.hpp"

using namespace trinity;
using namespace trinity::data;
using trinity::testing::read_text;
using trinity::testing::TempDir;
using trinity::testing::write_text;

namespace {

void write_png(const std::filesystem::path& p, std::size_t w, std::size_t h, std::uint8_t v) {
  io::Rgb8 img{w, h, std::vector<std::uint8_t>(w * h * 3, v)};
  io::write_file(p, io::encode_png(img));
}

std::string line(const std::string& path, const std::string& label, const std::string& gen) {
  return R"({"image_path":")" + path + R"(","caption":"c","label":")" + label +
         R"(","generator":")" + gen + "\"}\n";
}

double mean_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a.values()[k] - b.values()[k]);
  return s / static_cast<double>(a.size());
}

double mean(const ImageTensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST(Labels, ParseExactStrings) {
  EXPECT_EQ(label_from_string("real"), Label::Real);
  EXPECT_EQ(label_from_string("fake"), Label::Fake);
  EXPECT_FALSE(label_from_string("Real"));
  EXPECT_FALSE(label_from_string(""));
}

TEST(Manifest, LoadsValidEntriesRelativeToManifest) {
  TempDir d;
  std::filesystem::create_directories(d / "img");
  write_png(d / "img/a.png", 4, 4, 10);
  write_png(d / "img/b.png", 4, 4, 20);
  write_text(d / "m.jsonl", line("img/a.png", "real", "real") + "\n" + line("img/b.png", "fake", "sd"));
  const auto m = load_manifest(d / "m.jsonl");
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries[1].label, Label::Fake);
  EXPECT_EQ(m.entries[1].generator, "sd");
  EXPECT_EQ(m.entries[0].resolved_path, d / "img/a.png");
  EXPECT_TRUE(m.warnings.empty());
}

TEST(Manifest, DataRootEnvironmentOverridesBase) {
  TempDir d, root;
  write_png(root / "x.png", 4, 4, 1);
  write_text(d / "m.jsonl", line("x.png", "real", "toy-real"));
  ::setenv(kDataRootEnv, root.path().c_str(), 1);
  const auto m = load_manifest(d / "m.jsonl");
  ::unsetenv(kDataRootEnv);
  EXPECT_EQ(m.entries.at(0).resolved_path, root / "x.png");
}

TEST(Manifest, ReportsEveryBadLineWithLineNumbers) {
  TempDir d;
  write_png(d / "a.png", 4, 4, 1);
  write_text(d / "m.jsonl", line("a.png", "real", "real") + "{not json\n" +
                                R"({"image_path":"a.png","label":"fake","generator":"g"})" "\n" +
                                line("a.png", "maybe", "g") + line("a.png", "real", "sd"));
  try {
    load_manifest(d / "m.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 2:"), std::string::npos);
    EXPECT_NE(msg.find("line 3: missing or non-string field 'caption'"), std::string::npos);
    EXPECT_NE(msg.find("line 4: unknown label 'maybe'"), std::string::npos);
    EXPECT_NE(msg.find("line 5: label real requires generator"), std::string::npos);
    EXPECT_EQ(msg.find("line 1:"), std::string::npos);
  }
}

TEST(Manifest, ListsAllMissingImagesTogether) {
  TempDir d;
  write_text(d / "m.jsonl", line("gone1.png", "fake", "g") + line("gone2.png", "fake", "g"));
  try {
    load_manifest(d / "m.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("gone1.png"), std::string::npos);
    EXPECT_NE(msg.find("gone2.png"), std::string::npos);
  }
}

TEST(Manifest, EmptyFileWarnsAndMissingFileThrows) {
  TempDir d;
  write_text(d / "m.jsonl", "\n\n");
  const auto m = load_manifest(d / "m.jsonl");
  EXPECT_TRUE(m.entries.empty());
  EXPECT_EQ(m.warnings.size(), 1u);
  EXPECT_THROW(load_manifest(d / "nope.jsonl"), DataError);
}

TEST(Manifest, WriteThenLoadRoundTrips) {
  TempDir d;
  write_png(d / "a.png", 4, 4, 1);
  const std::vector<ManifestEntry> entries = {{"a.png", "a \"quoted\" caption", Label::Fake, "glide", {}},
                                              {"a.png", "", Label::Real, "real", {}}};
  write_manifest(d / "m.jsonl", entries);
  EXPECT_EQ(load_manifest(d / "m.jsonl").entries, entries);
}

TEST(Preprocess, DecodesAndKeepsNativeSize) {
  io::Rgb8 img{64, 64, std::vector<std::uint8_t>(64 * 64 * 3, 255)};
  const auto t = preprocess(io::encode_png(img), {64, 64});
  EXPECT_EQ(t.channels(), 3u);
  EXPECT_EQ(t.height(), 64u);
  for (double v : t.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Preprocess, ResizesOtherResolutions) {
  io::Rgb8 img{30, 20, std::vector<std::uint8_t>(30 * 20 * 3, 51)};
  const auto t = preprocess(io::encode_jpeg(img, 95), {64, 64});
  EXPECT_EQ(t.height(), 64u);
  EXPECT_EQ(t.width(), 64u);
  EXPECT_NEAR(mean(t), 0.2, 0.01);
}

TEST(Preprocess, GarbageBytesRaiseDataError) {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_THROW(preprocess(junk, {64, 64}), DataError);
  EXPECT_THROW(preprocess({}, {64, 64}), DataError);
  std::vector<std::uint8_t> truncated = io::encode_png({8, 8, std::vector<std::uint8_t>(192, 9)});
  truncated.resize(truncated.size() / 2);
  EXPECT_THROW(preprocess(truncated, {64, 64}), DataError);
}

TEST(Perturbation, TokensAndColumns) {
  const auto g = default_grid();
  ASSERT_EQ(g.size(), 5u);
  const std::vector<std::string> cols = {"Ori", "JPEG80", "JPEG50", "Gauss1", "Gauss2"};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(g[i].column_name(), cols[i]);
    EXPECT_EQ(parse_perturbation(g[i].token()), g[i]);
  }
  EXPECT_EQ(parse_perturbation("blur1.5"), PerturbationSpec::blur(1.5));
  EXPECT_THROW(parse_perturbation("jpeg0"), ValidationError);
  EXPECT_THROW(parse_perturbation("jpeg101"), ValidationError);
  EXPECT_THROW(parse_perturbation("blur-1"), ValidationError);
  EXPECT_THROW(parse_perturbation("noise3"), ValidationError);
  EXPECT_THROW(parse_perturbation("jpeg"), ValidationError);
}

TEST(Perturbation, NoneIsIdentity) {
  std::mt19937_64 rng(1);
  const auto img = trinity::testing::random_tensor(3, 16, 16, rng, 0.0, 1.0);
  EXPECT_EQ(perturb(img, PerturbationSpec::none()), img);
}

TEST(Perturbation, StrongerJpegDistortsMoreOnSeededBatch) {
  ToyGenConfig cfg;
  double mad50 = 0.0, mad80 = 0.0;
  for (std::size_t i = 0; i < 50; ++i) {
    for (auto l : {Label::Real, Label::Fake}) {
      const auto img = io::to_tensor(io::to_rgb8(toy_sample(cfg, l, i).image));
      mad50 += mean_abs_diff(img, perturb(img, PerturbationSpec::jpeg(50)));
      mad80 += mean_abs_diff(img, perturb(img, PerturbationSpec::jpeg(80)));
    }
  }
  EXPECT_GT(mad50, mad80);
  EXPECT_GT(mad80, 0.0);
}

TEST(Perturbation, BlurPreservesMeanBrightness) {
  std::mt19937_64 rng(2);
  for (double sigma : {0.5, 1.0, 2.0, 3.0}) {
    const auto img = trinity::testing::random_tensor(3, 24, 17, rng, 0.0, 1.0);
    const auto b = gaussian_blur(img, sigma);
    for (std::size_t c = 0; c < 3; ++c) {
      double m0 = 0.0, m1 = 0.0;
      for (double v : img.channel(c)) m0 += v;
      for (double v : b.channel(c)) m1 += v;
      EXPECT_NEAR(m0 / img.plane_size(), m1 / b.plane_size(), 1e-4) << sigma;
    }
  }
}

TEST(Perturbation, BlurKeepsConstantImageAndSmooths) {
  const ImageTensor flat(3, 8, 8, 0.3);
  const auto b = gaussian_blur(flat, 2.0);
  for (double v : b.values()) EXPECT_NEAR(v, 0.3, 1e-12);
  ImageTensor spike(1, 9, 9, 0.0);
  spike(0, 4, 4) = 1.0;
  const auto s = gaussian_blur(spike, 1.0);
  EXPECT_LT(s(0, 4, 4), 1.0);
  EXPECT_GT(s(0, 4, 5), 0.0);
  EXPECT_NEAR(s(0, 4, 5), s(0, 5, 4), 1e-15);
}

TEST(ToyData, TextureIsNormalizedAndSeeded) {
  const Plane a = toy_texture(32, 1.0, 5);
  EXPECT_EQ(a, toy_texture(32, 1.0, 5));
  EXPECT_NE(a, toy_texture(32, 1.0, 6));
  double m = 0.0, v = 0.0;
  for (double x : a.values()) m += x;
  m /= a.size();
  for (double x : a.values()) v += (x - m) * (x - m);
  EXPECT_NEAR(m, 0.0, 1e-9);
  EXPECT_NEAR(v / a.size(), 1.0, 1e-9);
}

TEST(ToyData, UpsampleArtifactIsBlockConstantAndPreservesBlockMeans) {
  const Plane t = toy_texture(16, 1.0, 3);
  const Plane u = upsample_artifact(t);
  for (std::size_t y = 0; y < 16; y += 2) {
    for (std::size_t x = 0; x < 16; x += 2) {
      EXPECT_EQ(u(y, x), u(y + 1, x + 1));
      EXPECT_EQ(u(y, x), u(y, x + 1));
      const double m = (t(y, x) + t(y + 1, x) + t(y, x + 1) + t(y + 1, x + 1)) / 4.0;
      EXPECT_NEAR(u(y, x), m, 1e-12);
    }
  }
}

TEST(ToyData, CountOneGivesTwoManifestLines) {
  TempDir d;
  ToyGenConfig cfg;
  cfg.count_per_class = 1;
  cfg.holdout_fraction = 0.0;
  const auto paths = generate_toy_dataset(cfg, d.path());
  EXPECT_FALSE(paths.train);
  const auto m = load_manifest(paths.manifest);
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries[0].label, Label::Real);
  EXPECT_EQ(m.entries[1].label, Label::Fake);
  EXPECT_EQ(m.entries[0].generator, "toy-real");
}

TEST(ToyData, HoldoutSplitPartitionsEachClass) {
  TempDir d;
  ToyGenConfig cfg;
  cfg.count_per_class = 10;
  cfg.size = 16;
  const auto paths = generate_toy_dataset(cfg, d.path());
  ASSERT_TRUE(paths.train && paths.test);
  const auto tr = load_manifest(*paths.train).entries;
  const auto te = load_manifest(*paths.test).entries;
  EXPECT_EQ(tr.size(), 16u);
  EXPECT_EQ(te.size(), 4u);
  for (const auto& e : te) {
    for (const auto& f : tr) EXPECT_NE(e.image_path, f.image_path);
  }
}

TEST(ToyData, SameSeedGivesIdenticalBytes) {
  TempDir a, b;
  ToyGenConfig cfg;
  cfg.count_per_class = 3;
  cfg.size = 32;
  generate_toy_dataset(cfg, a.path());
  generate_toy_dataset(cfg, b.path());
  EXPECT_EQ(read_text(a / "manifest.jsonl"), read_text(b / "manifest.jsonl"));
  EXPECT_EQ(read_text(a / "images/fake_00002.png"), read_text(b / "images/fake_00002.png"));
  cfg.seed = 8;
  TempDir c;
  generate_toy_dataset(cfg, c.path());
  EXPECT_NE(read_text(a / "images/fake_00002.png"), read_text(c / "images/fake_00002.png"));
}

TEST(ToyData, ConfigValidation) {
  ToyGenConfig cfg;
  cfg.count_per_class = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.size = 31;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.artifact = "jpeg";
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.holdout_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  const auto back = toy_config_from_json(to_json(ToyGenConfig{}));
  EXPECT_EQ(back.count_per_class, 1000u);
  EXPECT_EQ(back.seed, 7u);
}

TEST(ThresholdOracle, FitsSeparableDataPerfectly) {
  const std::vector<double> s = {0.1, 0.2, 0.3, 0.7, 0.8, 0.9};
  const std::vector<Label> l = {Label::Real, Label::Real, Label::Real,
                                Label::Fake, Label::Fake, Label::Fake};
  const auto o = ThresholdOracle::fit(s, l);
  EXPECT_DOUBLE_EQ(o.accuracy(s, l), 1.0);
  std::vector<Label> flipped;
  for (auto x : l) flipped.push_back(x == Label::Real ? Label::Fake : Label::Real);
  EXPECT_DOUBLE_EQ(ThresholdOracle::fit(s, flipped).accuracy(s, flipped), 1.0);
  EXPECT_THROW(ThresholdOracle::fit({}, {}), ValidationError);
}

TEST(ThresholdOracle, HandlesTiedStatistics) {
  const std::vector<double> s = {1, 1, 1, 2, 2};
  const std::vector<Label> l = {Label::Real, Label::Real, Label::Fake, Label::Fake, Label::Fake};
  EXPECT_NEAR(ThresholdOracle::fit(s, l).accuracy(s, l), 0.8, 1e-12);
}

TEST(HighBandEnergy, FakesCarryLessHighBandEnergy) {
  ToyGenConfig cfg;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_GT(high_band_energy_ratio(toy_sample(cfg, Label::Real, i).image),
              high_band_energy_ratio(toy_sample(cfg, Label::Fake, i).image));
  }
  EXPECT_EQ(high_band_energy_ratio(ImageTensor(3, 8, 8, 0.5)), 0.0);
}
