#include "trinity/mcaf.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "trinity/layers.hpp"

namespace trinity::mcaf {

namespace {

// Two-step ranking of the 7×7 grid as published with the FcaNet reference
// implementation ("top32"), best component first.
constexpr std::array<BasisIndex, 32> kTwoStepTop32 = {{
    {0, 0}, {0, 1}, {6, 0}, {0, 5}, {0, 2}, {1, 0}, {1, 2}, {4, 0},
    {5, 0}, {1, 6}, {3, 0}, {0, 4}, {0, 6}, {0, 3}, {3, 5}, {2, 2},
    {4, 6}, {6, 3}, {3, 3}, {5, 3}, {5, 5}, {2, 1}, {6, 1}, {5, 2},
    {5, 4}, {3, 2}, {3, 1}, {4, 1}, {2, 3}, {2, 0}, {6, 5}, {1, 3},
}};

// Effective kernel on the DCT plane for each part.
std::vector<Plane> part_kernels(const FrequencyIndexSet& idx, const MCAFState& state,
                                const MCAFConfig& cfg) {
  std::vector<Plane> kernels;
  if (idx.criterion == Criterion::NAS) {
    const auto p = softmax(state.nas_alpha);
    Plane mix(cfg.dct_h, cfg.dct_w);
    for (std::size_t o = 0; o < idx.candidates.size(); ++o) {
      const Plane b = spectral::dct_basis(cfg.dct_h, cfg.dct_w, idx.candidates[o], cfg.convention);
      for (std::size_t k = 0; k < mix.size(); ++k) mix.raw()[k] += p[o] * b.raw()[k];
    }
    kernels.assign(idx.n_parts, mix);
  } else {
    kernels.reserve(idx.n_parts);
    for (const auto& a : idx.assignments) {
      kernels.push_back(spectral::dct_basis(cfg.dct_h, cfg.dct_w, a, cfg.convention));
    }
  }
  return kernels;
}

void check_inputs(const Tensor3& x, const FrequencyIndexSet& idx, const MCAFState& state,
                  const MCAFConfig& cfg) {
  if (x.channels() != cfg.channels) {
    throw ValidationError("mcaf: input has " + std::to_string(x.channels()) +
                          " channels, expected " + std::to_string(cfg.channels));
  }
  if (idx.n_parts != cfg.n_parts) throw ValidationError("mcaf: index set part count mismatch");
  if (idx.criterion == Criterion::NAS) {
    if (state.nas_alpha.size() != idx.candidates.size()) {
      throw ValidationError("mcaf: NAS logits do not match candidate count");
    }
  } else if (idx.assignments.size() != idx.n_parts) {
    throw ValidationError("mcaf: assignment count differs from part count");
  }
}

}  // namespace

const char* to_string(Criterion c) {
  switch (c) {
    case Criterion::LF: return "LF";
    case Criterion::TS: return "TS";
    case Criterion::NAS: return "NAS";
  }
  return "?";
}

Criterion criterion_from_string(const std::string& s) {
  if (s == "LF") return Criterion::LF;
  if (s == "TS") return Criterion::TS;
  if (s == "NAS") return Criterion::NAS;
  throw ConfigError("unknown frequency criterion '" + s + "'");
}

std::size_t MCAFConfig::hidden() const {
  if (fc_layers == 1) return channels;
  return std::max<std::size_t>(channels / std::max<std::size_t>(reduction, 1), 1);
}

void MCAFConfig::validate() const {
  if (channels == 0 || n_parts == 0) throw ConfigError("mcaf: channels and n_parts must be positive");
  if (channels % n_parts != 0) {
    throw ConfigError("mcaf: channels (" + std::to_string(channels) +
                      ") not divisible by n_parts (" + std::to_string(n_parts) + ")");
  }
  if (reduction == 0) throw ConfigError("mcaf: reduction ratio must be positive");
  if (fc_layers != 1 && fc_layers != 2) throw ConfigError("mcaf: fc_layers must be 1 or 2");
  if (dct_h == 0 || dct_w == 0) throw ConfigError("mcaf: DCT plane must be non-empty");
  if (criterion == Criterion::NAS) {
    if (nas_candidates.empty()) throw ConfigError("mcaf: NAS requires a non-empty candidate set");
    for (const auto& c : nas_candidates) {
      if (c.u >= dct_h || c.v >= dct_w) throw ConfigError("mcaf: NAS candidate outside DCT plane");
    }
  }
}

MCAFConfig default_config(std::size_t channels) {
  MCAFConfig cfg;
  cfg.channels = channels;
  cfg.n_parts = channels >= 16 ? 16 : channels;
  cfg.nas_candidates = zigzag_order(cfg.dct_h, cfg.dct_w);
  return cfg;
}

nlohmann::json to_json(const MCAFConfig& cfg) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : cfg.nas_candidates) cands.push_back({c.u, c.v});
  return {{"channels", cfg.channels},
          {"n_parts", cfg.n_parts},
          {"dct_plane", {cfg.dct_h, cfg.dct_w}},
          {"reduction", cfg.reduction},
          {"fc_layers", cfg.fc_layers},
          {"criterion", to_string(cfg.criterion)},
          {"nas_candidates", cands},
          {"convention", spectral::to_string(cfg.convention)}};
}

MCAFConfig config_from_json(const nlohmann::json& j) {
  const std::size_t channels = j.value("channels", std::size_t{16});
  MCAFConfig cfg = default_config(channels);
  cfg.n_parts = j.value("n_parts", cfg.n_parts);
  if (j.contains("dct_plane")) {
    cfg.dct_h = j.at("dct_plane").at(0).get<std::size_t>();
    cfg.dct_w = j.at("dct_plane").at(1).get<std::size_t>();
    cfg.nas_candidates = zigzag_order(cfg.dct_h, cfg.dct_w);
  }
  cfg.reduction = j.value("reduction", cfg.reduction);
  cfg.fc_layers = j.value("fc_layers", cfg.fc_layers);
  if (j.contains("criterion")) cfg.criterion = criterion_from_string(j.at("criterion").get<std::string>());
  if (j.contains("nas_candidates")) {
    cfg.nas_candidates.clear();
    for (const auto& c : j.at("nas_candidates")) {
      cfg.nas_candidates.push_back({c.at(0).get<std::size_t>(), c.at(1).get<std::size_t>()});
    }
  }
  if (j.contains("convention")) {
    const auto s = j.at("convention").get<std::string>();
    if (s == "orthonormal") {
      cfg.convention = spectral::Convention::Orthonormal;
    } else if (s == "unnormalized") {
      cfg.convention = spectral::Convention::Unnormalized;
    } else {
      throw ConfigError("unknown DCT convention '" + s + "'");
    }
  }
  cfg.validate();
  return cfg;
}

MCAFState zero_state(const MCAFConfig& cfg) {
  MCAFState s;
  const std::size_t C = cfg.channels;
  const std::size_t hid = cfg.hidden();
  s.fc1_w.assign(hid * C, 0.0);
  s.fc1_b.assign(hid, 0.0);
  if (cfg.fc_layers == 2) {
    s.fc2_w.assign(C * hid, 0.0);
    s.fc2_b.assign(C, 0.0);
  }
  if (cfg.criterion == Criterion::NAS) s.nas_alpha.assign(cfg.nas_candidates.size(), 0.0);
  return s;
}

MCAFState init_state(const MCAFConfig& cfg, std::mt19937_64& rng) {
  MCAFState s = zero_state(cfg);
  auto fill = [&rng](std::vector<double>& w, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w) v = dist(rng);
  };
  fill(s.fc1_w, cfg.channels);
  if (cfg.fc_layers == 2) fill(s.fc2_w, cfg.hidden());
  return s;
}

void validate_state(const MCAFState& state, const MCAFConfig& cfg) {
  const MCAFState ref = zero_state(cfg);
  if (state.fc1_w.size() != ref.fc1_w.size() || state.fc1_b.size() != ref.fc1_b.size() ||
      state.fc2_w.size() != ref.fc2_w.size() || state.fc2_b.size() != ref.fc2_b.size() ||
      state.nas_alpha.size() != ref.nas_alpha.size()) {
    throw ValidationError("mcaf: state shapes inconsistent with configuration");
  }
  for (const auto* v : {&state.fc1_w, &state.fc1_b, &state.fc2_w, &state.fc2_b, &state.nas_alpha}) {
    if (!all_finite(*v)) throw ValidationError("mcaf: non-finite parameter");
  }
}

std::vector<BasisIndex> zigzag_order(std::size_t height, std::size_t width) {
  std::vector<BasisIndex> out;
  out.reserve(height * width);
  for (std::size_t u = 0; u < height; ++u) {
    for (std::size_t v = 0; v < width; ++v) out.push_back({u, v});
  }
  std::stable_sort(out.begin(), out.end(), [](const BasisIndex& a, const BasisIndex& b) {
    if (a.u + a.v != b.u + b.v) return a.u + a.v < b.u + b.v;
    return a.u < b.u;
  });
  return out;
}

std::span<const BasisIndex> two_step_table() { return kTwoStepTop32; }

FrequencyIndexSet select_frequencies(const MCAFConfig& cfg) {
  cfg.validate();
  FrequencyIndexSet set;
  set.criterion = cfg.criterion;
  set.n_parts = cfg.n_parts;
  switch (cfg.criterion) {
    case Criterion::LF: {
      const auto order = zigzag_order(cfg.dct_h, cfg.dct_w);
      if (cfg.n_parts > order.size()) {
        throw ConfigError("mcaf: n_parts exceeds the " + std::to_string(order.size()) +
                          " available frequency indices");
      }
      set.assignments.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.n_parts));
      break;
    }
    case Criterion::TS: {
      const auto table = two_step_table();
      if (cfg.n_parts > table.size()) {
        throw ConfigError("mcaf: n_parts exceeds the two-step table length (" +
                          std::to_string(table.size()) + ")");
      }
      for (std::size_t i = 0; i < cfg.n_parts; ++i) {
        if (table[i].u >= cfg.dct_h || table[i].v >= cfg.dct_w) {
          throw ConfigError("mcaf: two-step table entry outside the configured DCT plane");
        }
        set.assignments.push_back(table[i]);
      }
      break;
    }
    case Criterion::NAS:
      set.candidates = cfg.nas_candidates;
      break;
  }
  return set;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::vector<double> mcaf_freq_vector(const Tensor3& x, const FrequencyIndexSet& idx,
                                     const MCAFState& state, const MCAFConfig& cfg) {
  check_inputs(x, idx, state, cfg);
  const Tensor3 pooled = nn::adaptive_avg_pool(x, cfg.dct_h, cfg.dct_w);
  const auto kernels = part_kernels(idx, state, cfg);
  const std::size_t cp = cfg.part_size();
  std::vector<double> freq(cfg.channels, 0.0);
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    const auto& k = kernels[c / cp].raw();
    const auto ch = pooled.channel(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < ch.size(); ++i) acc += ch[i] * k[i];
    freq[c] = acc;
  }
  return freq;
}

FreqVectorGrad mcaf_freq_vector_backward(const Tensor3& x, const FrequencyIndexSet& idx,
                                         const MCAFState& state, const MCAFConfig& cfg,
                                         std::span<const double> d_freq) {
  check_inputs(x, idx, state, cfg);
  if (d_freq.size() != cfg.channels) throw ValidationError("mcaf: gradient length mismatch");
  const auto kernels = part_kernels(idx, state, cfg);
  const std::size_t cp = cfg.part_size();

  Tensor3 d_pooled(cfg.channels, cfg.dct_h, cfg.dct_w);
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    const auto& k = kernels[c / cp].raw();
    auto dch = d_pooled.channel(c);
    for (std::size_t i = 0; i < dch.size(); ++i) dch[i] = d_freq[c] * k[i];
  }

  FreqVectorGrad g;
  g.d_x = nn::adaptive_avg_pool_backward(d_pooled, x.height(), x.width());

  if (idx.criterion == Criterion::NAS) {
    // freq[c] = sum_o p_o proj_o[c]  =>  dfreq[c]/dalpha_o = p_o (proj_o[c] - freq[c]).
    const Tensor3 pooled = nn::adaptive_avg_pool(x, cfg.dct_h, cfg.dct_w);
    const auto p = softmax(state.nas_alpha);
    const auto& mix = kernels.front().raw();
    std::vector<double> freq(cfg.channels);
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      const auto ch = pooled.channel(c);
      double acc = 0.0;
      for (std::size_t i = 0; i < ch.size(); ++i) acc += ch[i] * mix[i];
      freq[c] = acc;
    }
    g.d_alpha.assign(p.size(), 0.0);
    for (std::size_t o = 0; o < p.size(); ++o) {
      const auto proj = spectral::freq_component(pooled, idx.candidates[o], cfg.convention);
      double acc = 0.0;
      for (std::size_t c = 0; c < cfg.channels; ++c) acc += d_freq[c] * (proj[c] - freq[c]);
      g.d_alpha[o] = p[o] * acc;
    }
  }
  return g;
}

AttentionVector mcaf_attention(std::span<const double> freq, const MCAFState& state) {
  const std::size_t C = freq.size();
  if (state.fc1_b.empty() || state.fc1_w.size() != state.fc1_b.size() * C) {
    throw ValidationError("mcaf_attention: freq length does not match fc input size");
  }
  const std::size_t hid = state.fc1_b.size();
  std::vector<double> z = nn::linear(state.fc1_w, state.fc1_b, freq, hid);
  if (!state.fc2_w.empty()) {
    if (state.fc2_b.size() != C) throw ValidationError("mcaf_attention: fc2 shape mismatch");
    nn::relu_inplace(z);
    z = nn::linear(state.fc2_w, state.fc2_b, z, C);
  } else if (hid != C) {
    throw ValidationError("mcaf_attention: single-layer map must be C x C");
  }
  AttentionVector a;
  a.weights.resize(C);
  for (std::size_t c = 0; c < C; ++c) a.weights[c] = nn::sigmoid(z[c]);
  return a;
}

std::vector<double> mcaf_attention_backward(std::span<const double> freq,
                                            const MCAFState& state,
                                            std::span<const double> d_attn, MCAFState& d_state) {
  const std::size_t C = freq.size();
  const std::size_t hid = state.fc1_b.size();
  if (d_attn.size() != C) throw ValidationError("mcaf_attention_backward: gradient length mismatch");
  std::vector<double> h = nn::linear(state.fc1_w, state.fc1_b, freq, hid);
  std::vector<double> z = h;
  const bool two_layer = !state.fc2_w.empty();
  if (two_layer) {
    nn::relu_inplace(h);
    z = nn::linear(state.fc2_w, state.fc2_b, h, C);
  }
  std::vector<double> dz(C);
  for (std::size_t c = 0; c < C; ++c) {
    const double s = nn::sigmoid(z[c]);
    dz[c] = d_attn[c] * s * (1.0 - s);
  }
  if (two_layer) {
    std::vector<double> dh = nn::linear_backward(state.fc2_w, h, dz, d_state.fc2_w, d_state.fc2_b);
    nn::relu_backward_inplace(h, dh);
    return nn::linear_backward(state.fc1_w, freq, dh, d_state.fc1_w, d_state.fc1_b);
  }
  return nn::linear_backward(state.fc1_w, freq, dz, d_state.fc1_w, d_state.fc1_b);
}

Tensor3 mcaf_apply(const Tensor3& x, const AttentionVector& attn) {
  if (attn.weights.size() != x.channels()) {
    throw ValidationError("mcaf_apply: attention length " + std::to_string(attn.weights.size()) +
                          " does not match " + std::to_string(x.channels()) + " channels");
  }
  Tensor3 out = x;
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (double& v : out.channel(c)) v *= attn.weights[c];
  }
  return out;
}

}  // namespace trinity::mcaf
