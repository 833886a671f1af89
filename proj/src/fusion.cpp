#include "trinity/fusion.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <utility>

#include "trinity/layers.hpp"

namespace trinity::fusion {

namespace {

constexpr nn::Conv3x3 conv1_of(const DetectorConfig& cfg) { return {3, cfg.channels, 2}; }
constexpr nn::Conv3x3 conv2_of(const DetectorConfig& cfg) { return {cfg.channels, cfg.channels, 2}; }

std::vector<double> channel_means(const Tensor3& t) {
  std::vector<double> m(t.channels());
  for (std::size_t c = 0; c < t.channels(); ++c) {
    double acc = 0.0;
    for (double v : t.channel(c)) acc += v;
    m[c] = acc / static_cast<double>(t.plane_size());
  }
  return m;
}

// Intermediate values of one forward pass, kept for the backward pass.
struct Trace {
  Tensor3 gated_input;  // raw placement only
  std::vector<double> freq;
  mcaf::AttentionVector attn;
  Tensor3 a1, a2;
  std::vector<double> means;  // channel means of a2
  std::vector<double> g;      // attended pooled vector
  std::vector<double> z;      // fused feature
  std::vector<double> h;      // head hidden activation
  double logit = 0.0;
};

Trace run_forward(const DetectorModel& model, const EmbeddedSample& s) {
  const DetectorConfig& cfg = model.config;
  const DetectorParams& p = model.params;
  if (s.image.channels() != 3 || s.image.height() != cfg.input_h || s.image.width() != cfg.input_w) {
    throw ValidationError("forward: image must be 3x" + std::to_string(cfg.input_h) + "x" +
                          std::to_string(cfg.input_w));
  }
  if (s.text.size() != model.text_dim() || s.image_embedding.size() != model.image_dim()) {
    throw ValidationError("forward: embedding dimensions do not match the model");
  }
  Trace t;
  std::vector<double> f(cfg.freq_dim, 0.0);
  if (!cfg.ablation.disable_frequency) {
    const auto c1 = conv1_of(cfg);
    const auto c2 = conv2_of(cfg);
    if (cfg.placement == McafPlacement::RawRgb) {
      t.freq = mcaf::mcaf_freq_vector(s.image, model.frequencies, p.mcaf, cfg.mcaf);
      t.attn = mcaf::mcaf_attention(t.freq, p.mcaf);
      t.gated_input = mcaf::mcaf_apply(s.image, t.attn);
      t.a1 = c1.forward(t.gated_input, p.conv1_w, p.conv1_b);
      nn::relu_inplace(t.a1.values());
      t.a2 = c2.forward(t.a1, p.conv2_w, p.conv2_b);
      nn::relu_inplace(t.a2.values());
      t.means = channel_means(t.a2);
      t.g = t.means;
    } else {
      t.a1 = c1.forward(s.image, p.conv1_w, p.conv1_b);
      nn::relu_inplace(t.a1.values());
      t.a2 = c2.forward(t.a1, p.conv2_w, p.conv2_b);
      nn::relu_inplace(t.a2.values());
      t.freq = mcaf::mcaf_freq_vector(t.a2, model.frequencies, p.mcaf, cfg.mcaf);
      t.attn = mcaf::mcaf_attention(t.freq, p.mcaf);
      t.means = channel_means(t.a2);
      t.g = channel_means(mcaf::mcaf_apply(t.a2, t.attn));
    }
    f = nn::linear(p.proj_w, p.proj_b, t.g, cfg.freq_dim);
  }
  t.z.reserve(model.fusion_dim());
  t.z.insert(t.z.end(), s.text.begin(), s.text.end());
  t.z.insert(t.z.end(), s.image_embedding.begin(), s.image_embedding.end());
  t.z.insert(t.z.end(), f.begin(), f.end());
  t.h = nn::linear(p.head1_w, p.head1_b, t.z, cfg.head_hidden);
  nn::relu_inplace(t.h);
  t.logit = nn::linear(p.head2_w, p.head2_b, t.h, 1)[0];
  return t;
}

std::vector<double> random_uniform(std::size_t n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

std::vector<double> random_normal(std::size_t n, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sd);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

const char* placement_name(McafPlacement p) {
  return p == McafPlacement::RawRgb ? "raw" : "feature";
}

}  // namespace

// --- configuration ------------------------------------------------------------

void DetectorConfig::validate() const {
  if (input_h < 4 || input_w < 4) throw ConfigError("detector: input must be at least 4x4");
  if (channels == 0 || freq_dim == 0 || head_hidden == 0) {
    throw ConfigError("detector: channels, freq_dim and head_hidden must be positive");
  }
  if (mcaf.channels != mcaf_channels()) {
    throw ConfigError("detector: mcaf.channels (" + std::to_string(mcaf.channels) +
                      ") must equal " + std::to_string(mcaf_channels()) + " for this placement");
  }
  mcaf.validate();
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("detector: threshold must be in [0,1]");
}

nlohmann::json to_json(const DetectorConfig& cfg) {
  return {{"input", {cfg.input_h, cfg.input_w}},
          {"channels", cfg.channels},
          {"placement", placement_name(cfg.placement)},
          {"mcaf", mcaf::to_json(cfg.mcaf)},
          {"freq_dim", cfg.freq_dim},
          {"head_hidden", cfg.head_hidden},
          {"threshold", cfg.threshold},
          {"encoder", encoders::to_json(cfg.encoder)},
          {"ablation",
           {{"disable_frequency", cfg.ablation.disable_frequency},
            {"disable_caption", cfg.ablation.disable_caption},
            {"caption_generated", cfg.ablation.caption_generated}}}};
}

DetectorConfig detector_config_from_json(const nlohmann::json& j) {
  DetectorConfig cfg;
  try {
    if (j.contains("input")) {
      cfg.input_h = j.at("input").at(0).get<std::size_t>();
      cfg.input_w = j.at("input").at(1).get<std::size_t>();
    }
    cfg.channels = j.value("channels", cfg.channels);
    const std::string placement = j.value("placement", std::string("feature"));
    if (placement == "feature") {
      cfg.placement = McafPlacement::FeatureMap;
    } else if (placement == "raw") {
      cfg.placement = McafPlacement::RawRgb;
    } else {
      throw ConfigError("detector: placement must be 'feature' or 'raw'");
    }
    nlohmann::json mj = j.value("mcaf", nlohmann::json::object());
    if (!mj.contains("channels")) mj["channels"] = cfg.mcaf_channels();
    cfg.mcaf = mcaf::config_from_json(mj);
    cfg.freq_dim = j.value("freq_dim", cfg.freq_dim);
    cfg.head_hidden = j.value("head_hidden", cfg.head_hidden);
    cfg.threshold = j.value("threshold", cfg.threshold);
    cfg.encoder = encoders::encoder_config_from_json(j.value("encoder", nlohmann::json::object()));
    const auto a = j.value("ablation", nlohmann::json::object());
    cfg.ablation.disable_frequency = a.value("disable_frequency", false);
    cfg.ablation.disable_caption = a.value("disable_caption", false);
    cfg.ablation.caption_generated = a.value("caption_generated", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("detector config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

// --- parameters ---------------------------------------------------------------

DetectorParams DetectorParams::zeros_like() const {
  DetectorParams z = *this;
  z.for_each_param([](const std::string&, std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
  return z;
}

std::size_t DetectorParams::count() const {
  std::size_t n = 0;
  for_each_param([&n](const std::string&, const std::vector<double>& v) { n += v.size(); });
  return n;
}

DetectorModel make_zero_model(const DetectorConfig& cfg) {
  cfg.validate();
  DetectorModel m;
  m.config = cfg;
  m.encoders = encoders::make_encoders(cfg.encoder);
  m.frequencies = mcaf::select_frequencies(cfg.mcaf);
  const std::size_t C = cfg.channels;
  auto& p = m.params;
  p.conv1_w.assign(conv1_of(cfg).weight_count(), 0.0);
  p.conv1_b.assign(C, 0.0);
  p.conv2_w.assign(conv2_of(cfg).weight_count(), 0.0);
  p.conv2_b.assign(C, 0.0);
  p.mcaf = mcaf::zero_state(cfg.mcaf);
  p.proj_w.assign(cfg.freq_dim * C, 0.0);
  p.proj_b.assign(cfg.freq_dim, 0.0);
  p.head1_w.assign(cfg.head_hidden * m.fusion_dim(), 0.0);
  p.head1_b.assign(cfg.head_hidden, 0.0);
  p.head2_w.assign(cfg.head_hidden, 0.0);
  p.head2_b.assign(1, 0.0);
  return m;
}

DetectorModel make_model(const DetectorConfig& cfg, std::uint64_t seed) {
  DetectorModel m = make_zero_model(cfg);
  std::mt19937_64 rng(seed);
  auto& p = m.params;
  const std::size_t C = cfg.channels;
  p.conv1_w = random_normal(p.conv1_w.size(), std::sqrt(2.0 / 27.0), rng);
  p.conv2_w = random_normal(p.conv2_w.size(), std::sqrt(2.0 / (9.0 * static_cast<double>(C))), rng);
  p.mcaf = mcaf::init_state(cfg.mcaf, rng);
  p.proj_w = random_uniform(p.proj_w.size(), 1.0 / std::sqrt(static_cast<double>(C)), rng);
  p.head1_w = random_uniform(p.head1_w.size(),
                             1.0 / std::sqrt(static_cast<double>(m.fusion_dim())), rng);
  p.head2_w = random_uniform(p.head2_w.size(),
                             1.0 / std::sqrt(static_cast<double>(cfg.head_hidden)), rng);
  return m;
}

void validate_model(const DetectorModel& model) {
  const DetectorModel ref = make_zero_model(model.config);
  bool ok = true;
  std::vector<std::size_t> sizes;
  ref.params.for_each_param([&](const std::string&, const std::vector<double>& v) { sizes.push_back(v.size()); });
  std::size_t i = 0;
  model.params.for_each_param([&](const std::string&, const std::vector<double>& v) {
    ok = ok && v.size() == sizes[i++] && all_finite(v);
  });
  if (!ok) throw ValidationError("detector: parameters inconsistent with configuration");
}

// --- forward ------------------------------------------------------------------

encoders::CaptionRecord effective_caption(const DetectorModel& model, const ImageTensor& img,
                                          const encoders::CaptionRecord& cap) {
  if (model.config.ablation.disable_caption) return encoders::CaptionRecord::none();
  if (model.config.ablation.caption_generated) return model.encoders.captions->caption(img);
  return cap;
}

EmbeddedSample embed(const DetectorModel& model, const ImageTensor& img,
                     const encoders::CaptionRecord& cap) {
  EmbeddedSample s;
  s.image = img;
  s.text = model.encoders.text->encode(effective_caption(model, img, cap)).vector;
  s.image_embedding = model.encoders.image->encode(img).vector;
  return s;
}

std::vector<double> fusion_feature(const DetectorModel& model, const EmbeddedSample& s) {
  return run_forward(model, s).z;
}

double forward(const DetectorModel& model, const EmbeddedSample& s) {
  return run_forward(model, s).logit;
}

double forward(const DetectorModel& model, const ImageTensor& img,
               const encoders::CaptionRecord& cap) {
  return forward(model, embed(model, img, cap));
}

double loss(double logit, data::Label label) {
  const double y = label == data::Label::Fake ? 1.0 : 0.0;
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

double loss_grad(double logit, data::Label label) {
  const double y = label == data::Label::Fake ? 1.0 : 0.0;
  return nn::sigmoid(logit) - y;
}

double loss_and_grad(const DetectorModel& model, const EmbeddedSample& s, data::Label label,
                     DetectorParams& grads) {
  const DetectorConfig& cfg = model.config;
  const DetectorParams& p = model.params;
  const Trace t = run_forward(model, s);
  const double d_logit = loss_grad(t.logit, label);

  const std::vector<double> d_out{d_logit};
  std::vector<double> dh = nn::linear_backward(p.head2_w, t.h, d_out, grads.head2_w, grads.head2_b);
  nn::relu_backward_inplace(t.h, dh);
  const std::vector<double> dz = nn::linear_backward(p.head1_w, t.z, dh, grads.head1_w, grads.head1_b);

  if (cfg.ablation.disable_frequency) return loss(t.logit, label);

  const std::size_t off = model.text_dim() + model.image_dim();
  const std::span<const double> df(dz.data() + off, cfg.freq_dim);
  const std::vector<double> dg = nn::linear_backward(p.proj_w, t.g, df, grads.proj_w, grads.proj_b);

  const auto c1 = conv1_of(cfg);
  const auto c2 = conv2_of(cfg);
  const std::size_t C = cfg.channels;
  const double inv_area = 1.0 / static_cast<double>(t.a2.plane_size());

  Tensor3 d_a2(C, t.a2.height(), t.a2.width());
  if (cfg.placement == McafPlacement::FeatureMap) {
    std::vector<double> d_attn(C);
    for (std::size_t c = 0; c < C; ++c) {
      d_attn[c] = dg[c] * t.means[c];
      const double dm = dg[c] * t.attn.weights[c] * inv_area;
      for (double& v : d_a2.channel(c)) v = dm;
    }
    const auto d_freq = mcaf::mcaf_attention_backward(t.freq, p.mcaf, d_attn, grads.mcaf);
    const auto fg = mcaf::mcaf_freq_vector_backward(t.a2, model.frequencies, p.mcaf, cfg.mcaf, d_freq);
    for (std::size_t k = 0; k < d_a2.size(); ++k) d_a2.raw()[k] += fg.d_x.raw()[k];
    for (std::size_t o = 0; o < fg.d_alpha.size(); ++o) grads.mcaf.nas_alpha[o] += fg.d_alpha[o];
    nn::relu_backward_inplace(t.a2.values(), d_a2.values());
    Tensor3 d_a1 = c2.backward(t.a1, p.conv2_w, d_a2, grads.conv2_w, grads.conv2_b, true);
    nn::relu_backward_inplace(t.a1.values(), d_a1.values());
    c1.backward(s.image, p.conv1_w, d_a1, grads.conv1_w, grads.conv1_b, false);
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      for (double& v : d_a2.channel(c)) v = dg[c] * inv_area;
    }
    nn::relu_backward_inplace(t.a2.values(), d_a2.values());
    Tensor3 d_a1 = c2.backward(t.a1, p.conv2_w, d_a2, grads.conv2_w, grads.conv2_b, true);
    nn::relu_backward_inplace(t.a1.values(), d_a1.values());
    const Tensor3 d_gated = c1.backward(t.gated_input, p.conv1_w, d_a1, grads.conv1_w, grads.conv1_b, true);
    std::vector<double> d_attn(3, 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
      const auto gx = d_gated.channel(c);
      const auto xx = s.image.channel(c);
      for (std::size_t k = 0; k < gx.size(); ++k) d_attn[c] += gx[k] * xx[k];
    }
    const auto d_freq = mcaf::mcaf_attention_backward(t.freq, p.mcaf, d_attn, grads.mcaf);
    const auto fg = mcaf::mcaf_freq_vector_backward(s.image, model.frequencies, p.mcaf, cfg.mcaf, d_freq);
    for (std::size_t o = 0; o < fg.d_alpha.size(); ++o) grads.mcaf.nas_alpha[o] += fg.d_alpha[o];
  }
  return loss(t.logit, label);
}

Prediction predict_from_logit(double logit, double threshold) {
  Prediction p;
  p.score = nn::sigmoid(logit);
  p.label = p.score >= threshold ? data::Label::Fake : data::Label::Real;
  return p;
}

Prediction predict(const DetectorModel& model, const ImageTensor& img,
                   const encoders::CaptionRecord& cap) {
  return predict_from_logit(forward(model, img, cap), model.config.threshold);
}

// --- checkpoint ---------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "checkpoint arrays are stored little-endian");

void save_checkpoint(const std::filesystem::path& path, const DetectorModel& model,
                     const nlohmann::json& extra) {
  nlohmann::json header;
  header["format"] = kCheckpointTag;
  header["detector"] = to_json(model.config);
  header["extra"] = extra;
  nlohmann::json index = nlohmann::json::array();
  model.params.for_each_param([&](const std::string& name, const std::vector<double>& v) {
    index.push_back({{"name", name}, {"size", v.size()}});
  });
  header["params"] = index;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out << kCheckpointTag << '\n' << header.dump() << '\n';
  model.params.for_each_param([&](const std::string&, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  });
  if (!out) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::string tag, header_line;
  std::getline(in, tag);
  if (tag != kCheckpointTag) {
    throw DataError("'" + path.string() + "' is not a " + std::string(kCheckpointTag) + " file");
  }
  std::getline(in, header_line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }

  LoadedCheckpoint out;
  out.snapshot = header;
  out.model = make_zero_model(detector_config_from_json(header.at("detector")));

  std::map<std::string, std::vector<double>> arrays;
  for (const auto& entry : header.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    const auto size = entry.at("size").get<std::size_t>();
    std::vector<double> v(size);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(size * sizeof(double)));
    if (!in) throw DataError("checkpoint truncated while reading '" + name + "'");
    arrays.emplace(name, std::move(v));
  }
  out.model.params.for_each_param([&](const std::string& name, std::vector<double>& v) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw DataError("checkpoint lacks parameter '" + name + "'");
    if (it->second.size() != v.size()) {
      throw DataError("checkpoint parameter '" + name + "' has size " +
                      std::to_string(it->second.size()) + ", expected " + std::to_string(v.size()));
    }
    v = std::move(it->second);
  });
  validate_model(out.model);
  return out;
}

}  // namespace trinity::fusion
