#include "trinity/eval.hpp"

#include <gtest/gtest.h>

#include <charconv>
#include <cstdlib>

#include "support/tempdir.hpp"
#include "trinity/image_io.hpp"

using namespace trinity;
using namespace trinity::eval;
using data::Label;
using data::PerturbationSpec;

namespace {

class PerfectClassifier : public Classifier {
 public:
  double score(const data::ManifestEntry& e, const ImageTensor&,
               const encoders::CaptionRecord&) const override {
    return e.label == Label::Fake ? 0.9 : 0.1;
  }
};

class AlwaysFake : public Classifier {
 public:
  double score(const data::ManifestEntry&, const ImageTensor&,
               const encoders::CaptionRecord&) const override {
    return 0.5;  // on the threshold, which counts as fake
  }
};

// Calls the image "fake" when it is darker than 0.5 on average.
class BrightnessClassifier : public Classifier {
 public:
  double score(const data::ManifestEntry&, const ImageTensor& img,
               const encoders::CaptionRecord&) const override {
    double s = 0.0;
    for (double v : img.values()) s += v;
    return 1.0 - s / static_cast<double>(img.size());
  }
};

NamedDataset synthetic_set(const std::string& name, std::size_t per_class) {
  NamedDataset d;
  d.name = name;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (auto l : {Label::Real, Label::Fake}) {
      const double v = l == Label::Fake ? 0.3 : 0.7;
      d.entries.push_back({"img" + std::to_string(d.entries.size()) + ".png", "c", l,
                           l == Label::Fake ? "toy" : "toy-real", {}});
      d.items.push_back({ImageTensor(3, 16, 16, v), {"c", encoders::CaptionSource::Dataset}, l});
    }
  }
  return d;
}

}  // namespace

TEST(Evaluate, PerfectClassifierScoresOne) {
  const auto r = evaluate(PerfectClassifier(), {synthetic_set("a", 5)}, data::default_grid());
  ASSERT_EQ(r.rows.size(), 1u);
  ASSERT_EQ(r.rows[0].cells.size(), 5u);
  for (const auto& c : r.rows[0].cells) {
    EXPECT_DOUBLE_EQ(c.acc, 1.0);
    EXPECT_EQ(c.n_total, 10u);
  }
  EXPECT_EQ(r.predictions.size(), 50u);
}

TEST(Evaluate, ConstantFakeOnBalancedSetScoresOneHalf) {
  const auto r = evaluate(AlwaysFake(), {synthetic_set("a", 6)}, {PerturbationSpec::none()});
  EXPECT_DOUBLE_EQ(r.rows[0].cells[0].acc, 0.5);
  for (const auto& p : r.predictions) EXPECT_EQ(p.predicted, Label::Fake);
}

TEST(Evaluate, ColumnsFollowGridAndRowsFollowDatasets) {
  const auto r = evaluate(BrightnessClassifier(), {synthetic_set("first", 2), synthetic_set("second", 3)},
                          data::default_grid());
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[1].dataset, "second");
  const std::string header = to_csv(r).substr(0, to_csv(r).find('\n'));
  EXPECT_EQ(header, "dataset,Ori,JPEG80,JPEG50,Gauss1,Gauss2");
}

TEST(Evaluate, ThreadCountDoesNotChangeOutput) {
  const std::vector<NamedDataset> sets = {synthetic_set("a", 7), synthetic_set("b", 4)};
  const auto one = evaluate(BrightnessClassifier(), sets, data::default_grid(), 1);
  const auto four = evaluate(BrightnessClassifier(), sets, data::default_grid(), 4);
  EXPECT_EQ(predictions_csv(one.predictions), predictions_csv(four.predictions));
  EXPECT_EQ(to_csv(one), to_csv(four));
}

TEST(Evaluate, RecountMatchesEveryCell) {
  const auto r = evaluate(BrightnessClassifier(), {synthetic_set("a", 5), synthetic_set("b", 3)},
                          data::default_grid());
  const auto parsed = parse_predictions_csv(predictions_csv(r.predictions));
  ASSERT_EQ(parsed.size(), r.predictions.size());
  for (const auto& row : r.rows) {
    for (const auto& c : row.cells) {
      const auto [n_ok, n] = recount(parsed, row.dataset, c.column);
      EXPECT_EQ(n_ok, c.n_correct);
      EXPECT_EQ(n, c.n_total);
    }
  }
}

TEST(Evaluate, JsonAndCsvAgree) {
  const auto r = evaluate(BrightnessClassifier(), {synthetic_set("a", 4)}, data::default_grid());
  const auto j = to_json(r);
  const std::string csv = to_csv(r);
  const std::string row = csv.substr(csv.find('\n') + 1);
  std::string expect = "a";
  for (const auto& c : j["rows"][0]["cells"]) {
    char buf[64];
    const double acc = c["acc"].get<double>();
    const auto res = std::to_chars(buf, buf + sizeof buf, acc);
    expect += "," + std::string(buf, res.ptr);
    EXPECT_DOUBLE_EQ(acc, static_cast<double>(c["n_correct"].get<std::size_t>()) /
                              c["n_total"].get<std::size_t>());
  }
  EXPECT_EQ(row, expect + "\n");
}

TEST(Report, TimestampHonoursSourceDateEpoch) {
  ::setenv("SOURCE_DATE_EPOCH", "0", 1);
  EXPECT_EQ(report_timestamp(), "1970-01-01T00:00:00Z");
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  EXPECT_EQ(report_timestamp(), "2023-11-14T22:13:20Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
}

TEST(Report, WrittenFilesAreReproducible) {
  ::setenv("SOURCE_DATE_EPOCH", "1", 1);
  trinity::testing::TempDir a, b;
  for (const auto* d : {&a, &b}) {
    auto r = evaluate(BrightnessClassifier(), {synthetic_set("a", 3)}, data::default_grid());
    r.timestamp = report_timestamp();
    write_report(r, d->path());
  }
  ::unsetenv("SOURCE_DATE_EPOCH");
  for (const char* f : {"report.json", "report.csv", "predictions.csv"}) {
    EXPECT_EQ(trinity::testing::read_text(a / f), trinity::testing::read_text(b / f)) << f;
    EXPECT_FALSE(trinity::testing::read_text(a / f).empty());
  }
}

TEST(LoadNamedDataset, UsesManifestStem) {
  trinity::testing::TempDir d;
  data::ToyGenConfig g;
  g.count_per_class = 2;
  g.size = 16;
  g.holdout_fraction = 0.5;
  const auto paths = data::generate_toy_dataset(g, d.path());
  const auto set = load_named_dataset(*paths.test, {16, 16});
  EXPECT_EQ(set.name, "test");
  EXPECT_EQ(set.items.size(), 2u);
  EXPECT_EQ(set.entries.size(), set.items.size());
}

TEST(AblationPlan, StandardAndParsing) {
  const auto s = AblationPlan::standard();
  ASSERT_EQ(s.configs.size(), 4u);
  EXPECT_EQ(s.configs[0].first, "full");
  EXPECT_TRUE(s.configs[1].second.disable_frequency);
  EXPECT_TRUE(s.configs[2].second.disable_caption);
  EXPECT_TRUE(s.configs[3].second.caption_generated);
  const auto p = AblationPlan::from_names({"freq_ablated", "full"});
  ASSERT_EQ(p.configs.size(), 2u);
  EXPECT_EQ(p.configs[0].first, "freq_ablated");
  EXPECT_THROW(AblationPlan::from_names({"full", "full"}), ConfigError);
  EXPECT_THROW(AblationPlan::from_names({"everything"}), ConfigError);
  EXPECT_THROW(AblationPlan::from_names({}), ConfigError);
}

TEST(Ablation, SmallRunProducesOneRowPerConfigAndDataset) {
  data::ToyGenConfig g;
  g.size = 32;
  std::vector<train::LabeledImage> tr;
  NamedDataset te;
  te.name = "held";
  for (std::size_t i = 0; i < 12; ++i) {
    for (auto l : {Label::Real, Label::Fake}) {
      auto s = data::toy_sample(g, l, i);
      train::LabeledImage item{io::to_tensor(io::to_rgb8(s.image)),
                               {s.caption, encoders::CaptionSource::Dataset}, l};
      if (i < 8) {
        tr.push_back(item);
      } else {
        te.entries.push_back({"x.png", s.caption, l, "toy", {}});
        te.items.push_back(item);
      }
    }
  }
  fusion::DetectorConfig det;
  det.input_h = det.input_w = 32;
  det.channels = 8;
  det.mcaf = mcaf::default_config(8);
  det.freq_dim = 8;
  det.head_hidden = 8;
  train::TrainConfig tc;
  tc.optimizer = "adam";
  tc.epochs = 1;
  tc.batch_size = 8;
  std::vector<std::string> log;
  const auto r = run_ablation(tr, {te}, det, tc, AblationPlan::standard(),
                              [&](const std::string& s) { log.push_back(s); });
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows[1].config, "freq_ablated");
  EXPECT_EQ(r.rows[0].dataset, "held");
  EXPECT_EQ(r.rows[0].n_total, 8u);
  EXPECT_EQ(r.final_probe_losses.size(), 4u);
  EXPECT_FALSE(log.empty());
  const std::string csv = to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "config,dataset,ACC,n_correct,n_total");
  for (const auto& row : r.rows) {
    const auto [ok, n] = recount(r.predictions, row.dataset, row.config);
    EXPECT_EQ(ok, row.n_correct);
    EXPECT_EQ(n, row.n_total);
  }
}
