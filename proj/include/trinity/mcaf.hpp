#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "trinity/spectral.hpp"
#include "trinity/tensor.hpp"

// Multi-spectral channel attention: the channels of a feature map are split
// into n equal parts, each part is projected onto one DCT basis image (or a
// softmax-weighted mixture of candidates), and the resulting C-vector is
// squeezed through a small fully connected map and a sigmoid to give one gate
// per channel.
namespace trinity::mcaf {

using spectral::BasisIndex;

/// Frequency selection rule: low-frequency zigzag prefix, the fixed two-step
/// ranking table, or a learned softmax mixture over a candidate grid.
enum class Criterion { LF, TS, NAS };

const char* to_string(Criterion c);
Criterion criterion_from_string(const std::string& s);

/// Per-part frequency assignment.
///
/// For LF and TS `assignments` holds exactly one index per part. For NAS
/// `assignments` is empty and every part uses the mixture over `candidates`.
struct FrequencyIndexSet {
  Criterion criterion = Criterion::LF;
  std::size_t n_parts = 0;
  std::vector<BasisIndex> assignments;
  std::vector<BasisIndex> candidates;

  bool operator==(const FrequencyIndexSet&) const = default;
};

struct MCAFConfig {
  std::size_t channels = 16;
  std::size_t n_parts = 16;
  std::size_t dct_h = 7;
  std::size_t dct_w = 7;
  std::size_t reduction = 4;
  /// 2 = C -> C/r -> C bottleneck with ReLU; 1 = a single C -> C map.
  int fc_layers = 2;
  Criterion criterion = Criterion::TS;
  std::vector<BasisIndex> nas_candidates;
  spectral::Convention convention = spectral::Convention::Orthonormal;

  std::size_t part_size() const { return channels / n_parts; }
  std::size_t hidden() const;

  /// Throws ConfigError on any inconsistency.
  void validate() const;
};

/// Defaults for a C-channel input: 16 parts when C >= 16 (otherwise C), 7×7
/// DCT plane, r = 4, two-step table, full 7×7 NAS grid.
MCAFConfig default_config(std::size_t channels);

nlohmann::json to_json(const MCAFConfig& cfg);
MCAFConfig config_from_json(const nlohmann::json& j);

/// Trainable parameters. fc1 is hidden×C, fc2 is C×hidden (both row-major).
/// With a single-layer map fc1 is C×C and fc2 is empty.
struct MCAFState {
  std::vector<double> fc1_w, fc1_b, fc2_w, fc2_b;
  std::vector<double> nas_alpha;

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + "fc1.weight", fc1_w);
    f(prefix + "fc1.bias", fc1_b);
    f(prefix + "fc2.weight", fc2_w);
    f(prefix + "fc2.bias", fc2_b);
    f(prefix + "nas.alpha", nas_alpha);
  }
  bool operator==(const MCAFState&) const = default;
};

/// All-zero parameters with the shapes implied by `cfg`.
MCAFState zero_state(const MCAFConfig& cfg);
/// Uniform fan-in initialization of the fc weights; biases and NAS logits zero.
MCAFState init_state(const MCAFConfig& cfg, std::mt19937_64& rng);
/// Throws ValidationError if shapes disagree with `cfg` or a value is non-finite.
void validate_state(const MCAFState& state, const MCAFConfig& cfg);

struct AttentionVector {
  std::vector<double> weights;
};

/// All H×W indices ordered by (u + v), ties broken by smaller u.
std::vector<BasisIndex> zigzag_order(std::size_t height, std::size_t width);

/// Top-32 two-step ranking on the 7×7 grid, DC first.
std::span<const BasisIndex> two_step_table();

FrequencyIndexSet select_frequencies(const MCAFConfig& cfg);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

/// Per-part frequency descriptor, length C. The input is average-pooled to the
/// configured DCT plane first when its spatial size differs.
std::vector<double> mcaf_freq_vector(const Tensor3& x, const FrequencyIndexSet& idx,
                                     const MCAFState& state, const MCAFConfig& cfg);

/// sigmoid(fc(freq)); every weight lies strictly in (0, 1).
AttentionVector mcaf_attention(std::span<const double> freq, const MCAFState& state);

/// out[c,h,w] = x[c,h,w] * attn[c].
Tensor3 mcaf_apply(const Tensor3& x, const AttentionVector& attn);

struct FreqVectorGrad {
  Tensor3 d_x;
  std::vector<double> d_alpha;
};
FreqVectorGrad mcaf_freq_vector_backward(const Tensor3& x, const FrequencyIndexSet& idx,
                                         const MCAFState& state, const MCAFConfig& cfg,
                                         std::span<const double> d_freq);

/// Accumulates parameter gradients into `d_state` and returns d(loss)/d(freq).
std::vector<double> mcaf_attention_backward(std::span<const double> freq,
                                            const MCAFState& state,
                                            std::span<const double> d_attn, MCAFState& d_state);

}  // namespace trinity::mcaf
