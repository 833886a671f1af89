#include "trinity/encoders.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "httplib.h"
#include "support/oracles.hpp"

using namespace trinity;
using namespace trinity::encoders;

namespace {

double norm(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0) / (norm(a) * norm(b));
}

ImageTensor solid(double r, double g, double b, std::size_t n = 16) {
  ImageTensor img(3, n, n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      img(0, y, x) = r;
      img(1, y, x) = g;
      img(2, y, x) = b;
    }
  }
  return img;
}

// Minimal in-process embedding service speaking the adapter's wire contract.
class FakeService {
 public:
  FakeService(int text_dim, int image_dim) {
    srv_.Get("/info", [=](const httplib::Request&, httplib::Response& res) {
      res.set_content(nlohmann::json{{"text_dim", text_dim}, {"image_dim", image_dim}}.dump(),
                      "application/json");
    });
    srv_.Post("/embed/text", [=](const httplib::Request& req, httplib::Response& res) {
      const auto j = nlohmann::json::parse(req.body);
      std::vector<double> v(text_dim, 0.0);
      v[j["text"].get<std::string>().size() % text_dim] = 2.0;
      res.set_content(nlohmann::json{{"embedding", v}}.dump(), "application/json");
    });
    srv_.Post("/embed/image", [=](const httplib::Request& req, httplib::Response& res) {
      const auto j = nlohmann::json::parse(req.body);
      std::vector<double> v(image_dim, 1.0);
      v[0] += j["data"][0].get<double>();
      res.set_content(nlohmann::json{{"embedding", v}}.dump(), "application/json");
    });
    srv_.Post("/caption", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"caption":"a served caption"})", "application/json");
    });
    port_ = srv_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
  }
  ~FakeService() {
    srv_.stop();
    thread_.join();
  }
  std::string ref() const { return "127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server srv_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(StubImageEncoder, DeterministicAndUnitNorm) {
  std::mt19937_64 rng(1);
  const auto img = trinity::testing::random_tensor(3, 32, 32, rng, 0.0, 1.0);
  const StubImageEncoder a(5), b(5);
  const auto ea = a.encode(img), eb = b.encode(img);
  EXPECT_EQ(ea.vector, eb.vector);
  EXPECT_EQ(ea.vector.size(), 64u);
  EXPECT_NEAR(norm(ea.vector), 1.0, 1e-12);
  EXPECT_EQ(ea.provenance, Provenance::Stub);
}

TEST(StubImageEncoder, SeedChangesProjection) {
  const auto img = solid(0.2, 0.5, 0.7);
  EXPECT_NE(StubImageEncoder(1).encode(img).vector, StubImageEncoder(2).encode(img).vector);
}

TEST(StubImageEncoder, OnePixelChangeMovesEmbedding) {
  auto img = solid(0.3, 0.3, 0.3);
  const StubImageEncoder enc(7);
  const auto before = enc.encode(img).vector;
  img(1, 5, 9) = 0.9;
  const auto after = enc.encode(img).vector;
  EXPECT_GT(trinity::testing::max_abs_diff(before, after), 1e-6);
}

TEST(StubImageEncoder, ZeroMeanChangeInsideCellIsInvisible) {
  auto img = solid(0.4, 0.4, 0.4);
  const StubImageEncoder enc(7);
  const auto before = enc.encode(img).vector;
  img(0, 0, 0) += 0.1;
  img(0, 0, 1) -= 0.1;
  EXPECT_LT(trinity::testing::max_abs_diff(before, enc.encode(img).vector), 1e-12);
}

TEST(StubImageEncoder, PooledStatisticsLayout) {
  const StubImageEncoder enc(1, 8, 2);
  const auto s = enc.pooled_statistics(solid(0.1, 0.2, 0.3, 4));
  ASSERT_EQ(s.size(), 3u * 4u + 1u);
  EXPECT_NEAR(s[0], 0.1, 1e-15);
  EXPECT_NEAR(s[4], 0.2, 1e-15);
  EXPECT_NEAR(s[11], 0.3, 1e-15);
  EXPECT_EQ(s[12], 1.0);
}

TEST(StubTextEncoder, DeterministicUnitNormAndDistinct) {
  const StubTextEncoder enc(9);
  const auto dog = enc.encode({"a dog", CaptionSource::Dataset});
  const auto dog2 = StubTextEncoder(9).encode({"a dog", CaptionSource::Dataset});
  const auto cat = enc.encode({"a cat", CaptionSource::Dataset});
  EXPECT_EQ(dog.vector, dog2.vector);
  EXPECT_NEAR(norm(dog.vector), 1.0, 1e-12);
  EXPECT_NE(dog.vector, cat.vector);
  EXPECT_LT(cosine(dog.vector, cat.vector), 0.99);
}

TEST(StubTextEncoder, CaseAndPunctuationInsensitive) {
  const StubTextEncoder enc(9);
  EXPECT_EQ(enc.encode({"A Dog.", CaptionSource::Dataset}).vector,
            enc.encode({"a dog", CaptionSource::Dataset}).vector);
  const std::vector<std::string> toks = {"a", "red", "noise", "texture"};
  EXPECT_EQ(tokenize("  A red, noise-texture "), toks);
}

TEST(StubTextEncoder, AbsentCaptionIsZeroVector) {
  const auto e = StubTextEncoder(9).encode(CaptionRecord::none());
  EXPECT_EQ(e.provenance, Provenance::Absent);
  EXPECT_EQ(e.vector, std::vector<double>(64, 0.0));
}

TEST(StubTextEncoder, EmptyTextStillHasFiniteEmbedding) {
  const auto e = StubTextEncoder(9).encode({"", CaptionSource::Dataset});
  EXPECT_TRUE(all_finite(e.vector));
  EXPECT_EQ(e.vector.size(), 64u);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(ToyCaptionProvider, NamesDominantHueBucket) {
  const ToyCaptionProvider p;
  EXPECT_EQ(ToyCaptionProvider::dominant_hue_bucket(solid(0.9, 0.1, 0.1)), 0);
  EXPECT_EQ(ToyCaptionProvider::dominant_hue_bucket(solid(0.1, 0.9, 0.1)), 2);
  EXPECT_EQ(ToyCaptionProvider::dominant_hue_bucket(solid(0.1, 0.1, 0.9)), 4);
  const auto c = p.caption(solid(0.1, 0.9, 0.1));
  EXPECT_EQ(c.text, "synthetic texture class 2");
  EXPECT_EQ(c.source, CaptionSource::Generated);
  EXPECT_EQ(NoCaptionProvider().caption(solid(0, 0, 0)), CaptionRecord::none());
}

TEST(EncoderConfig, JsonRoundTripAndValidation) {
  EncoderConfig cfg;
  cfg.seed = 99;
  cfg.caption_provider = "none";
  const auto back = encoder_config_from_json(to_json(cfg));
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.caption_provider, "none");
  EXPECT_THROW(encoder_config_from_json({{"backend", "clip"}}), ConfigError);
  EXPECT_THROW(encoder_config_from_json({{"caption_provider", "blip"}}), ConfigError);
}

TEST(MakeEncoders, StubSuite) {
  const auto s = make_encoders(EncoderConfig{});
  EXPECT_EQ(s.image->dim(), 64u);
  EXPECT_EQ(s.text->dim(), 64u);
  ASSERT_NE(s.captions, nullptr);
}

TEST(ExternalAdapter, UnreachableServiceRaisesEncoderUnavailable) {
  EncoderConfig cfg;
  cfg.backend = "external";
  cfg.model_ref = "127.0.0.1:1";
  EXPECT_THROW(make_encoders(cfg), EncoderUnavailable);
  cfg.model_ref = "";
  EXPECT_THROW(make_encoders(cfg), ConfigError);
}

TEST(ExternalAdapter, ServedEmbeddingsAreNormalized) {
  FakeService svc(8, 8);
  EncoderConfig cfg;
  cfg.backend = "external";
  cfg.model_ref = "http://" + svc.ref();
  cfg.caption_provider = "external";
  const auto s = make_encoders(cfg);
  EXPECT_EQ(s.text->dim(), 8u);
  const auto t = s.text->encode({"abc", CaptionSource::Dataset});
  EXPECT_EQ(t.provenance, Provenance::External);
  EXPECT_NEAR(norm(t.vector), 1.0, 1e-12);
  EXPECT_NEAR(t.vector[3], 1.0, 1e-12);
  EXPECT_EQ(s.text->encode(CaptionRecord::none()).provenance, Provenance::Absent);
  const auto i = s.image->encode(solid(0.5, 0.5, 0.5, 4));
  EXPECT_NEAR(norm(i.vector), 1.0, 1e-12);
  EXPECT_EQ(s.captions->caption(solid(0, 0, 0, 4)).text, "a served caption");
}

TEST(ExternalAdapter, DimensionMismatchIsConfigError) {
  FakeService svc(8, 16);
  EncoderConfig cfg;
  cfg.backend = "external";
  cfg.model_ref = svc.ref();
  EXPECT_THROW(make_encoders(cfg), ConfigError);
}
