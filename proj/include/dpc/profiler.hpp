#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dpc/bands.hpp"
#include "dpc/common.hpp"
#include "dpc/model_config.hpp"

// Analytic parameter and MACs accounting over a model configuration.
//
// Conventions: one MAC = one multiply-accumulate; a linear in->out costs
// in*out, a conv costs Cin*Kt*Kf*Cout per output element, a GRU step costs
// 3*h*(i+h), linear attention costs 4*E^2 projections plus
// 2*(E/heads)^2*heads of accumulator work per element. Element-wise work
// (activations, norms, residuals, masking) is excluded. Layers inside the
// compressed region are billed at the compressed frame rate and band count;
// macs_per_frame entries are amortized to the full 100 Hz frame rate.

namespace dpc {

struct LayerCost {
  std::string name;
  long long params = 0;
  double macs_per_frame = 0.0;  // amortized per full-rate frame
};

struct ComplexityReport {
  std::vector<LayerCost> layers;
  long long total_params = 0;
  double total_macs_per_frame = 0.0;
  double macs_per_second = 0.0;
  double frame_rate = 100.0;

  void finalize() {
    total_params = 0;
    total_macs_per_frame = 0.0;
    for (const auto& l : layers) {
      total_params += l.params;
      total_macs_per_frame += l.macs_per_frame;
    }
    macs_per_second = total_macs_per_frame * frame_rate;
  }

  nlohmann::json to_json() const {
    nlohmann::json layers_json = nlohmann::json::array();
    for (const auto& l : layers)
      layers_json.push_back(
          {{"name", l.name}, {"params", l.params}, {"macs_per_frame", l.macs_per_frame}});
    return {{"layers", layers_json},
            {"totals",
             {{"params", total_params},
              {"macs_per_frame", total_macs_per_frame},
              {"macs_per_second", macs_per_second}}}};
  }
};

/// Deterministic per-layer complexity of the full pipeline (model plus the
/// optional post network; the STFT frontend and linear AEC are not model
/// layers and are excluded).
inline ComplexityReport profile(const ModelConfig& cfg, int bins = 161) {
  cfg.validate();
  const double C = cfg.signals, E = cfg.feature_dim, G = cfg.conv_channels;
  const double r = cfg.time_ratio;
  const int B = cfg.bands(bins);
  const double F = bins;
  ComplexityReport rep;
  auto add = [&](std::string name, double params, double macs) {
    rep.layers.push_back({std::move(name), static_cast<long long>(params), macs});
  };

  // -- compression / input layer (compressed rate: cost / r) --
  if (cfg.freq_method == FreqMethod::trainable_mel) {
    auto layout = build_band_layout(BandScale::mel, bins, B);
    double sum_w = 0.0;
    for (int b = 0; b < B; ++b) sum_w += layout.width(b);
    add("fcomp", 2 * C * r * sum_w * E + B * E, 2 * C * E * sum_w);
  } else if (cfg.freq_method == FreqMethod::none) {
    add("in", 2 * C * r * E + E, 2 * C * E * F);
  } else {
    auto fb = build_fixed_filterbank(
        cfg.freq_method == FreqMethod::fixed_erb ? BandScale::erb : BandScale::mel, bins, B);
    double nonzero = 0.0;
    for (int b = 0; b < B; ++b) nonzero += fb.layout.width(b);
    add("filterbank", 0, C * nonzero);  // fixed triangles: full rate, no parameters
    add("in", C * r * E + E, C * E * B);
  }

  // -- encoder / decoder convs, 3x3, billed per compressed element --
  double conv_pair_params = (G * E * 9 + G + 3 * G) + (E * G * 9 + E + 3 * E);
  double conv_pair_macs = (E * 9 * G + G * 9 * E) * B / r;
  add("enc", conv_pair_params, conv_pair_macs);

  // -- dual-path blocks --
  double head_dim = E / cfg.heads;
  double attn_elem = 4 * E * E + 2 * head_dim * head_dim * cfg.heads;
  double attn_params = 4 * (E * E + E) + 2 * E;
  for (int i = 0; i < cfg.blocks; ++i) {
    std::string stem = "block." + std::to_string(i);
    add(stem + ".attn_f", attn_params, attn_elem * B / r);
    if (i == 0) add(stem + ".gru", 2 * 3 * E * E + 6 * E + 2 * E, 3 * E * 2 * E * B / r);
    add(stem + ".attn_t", attn_params, attn_elem * B / r);
  }

  add("dec", conv_pair_params, conv_pair_macs);

  // -- decompression + output layer (output runs at the full frame rate) --
  if (cfg.freq_method == FreqMethod::trainable_mel) {
    auto layout = build_band_layout(BandScale::mel, bins, B);
    double sum_w = 0.0;
    for (int b = 0; b < B; ++b) sum_w += layout.width(b);
    add("fdec", 4 * C * E * sum_w + 4 * C * sum_w, 4 * C * E * sum_w / r);
    add("out", 2 * C * 4 * C + 2 * C, 4 * C * 2 * C * F);
  } else {
    if (cfg.freq_method != FreqMethod::none) add("fdec", 0, E * B * F / r);
    add("out", 2 * C * E + 2 * C, E * 2 * C * F);
  }

  // -- post network (full rate) --
  if (cfg.postnet.enabled) {
    const auto& pn = cfg.postnet;
    auto layout = build_band_layout(BandScale::mel, bins, pn.bands);
    double sum_w = 0.0;
    for (int b = 0; b < layout.num_bands(); ++b) sum_w += layout.width(b);
    double H = pn.hidden, ch = pn.channels;
    add("postnet.comp", 2 * sum_w + pn.bands, 2 * sum_w);
    add("postnet.gru", 2 * 3 * H * H + 6 * H, 3 * H * 2 * H);
    add("postnet.dec", 2 * ch * sum_w, ch * sum_w);
    add("postnet.conv", (ch * ch + ch + ch) + (ch + 1), ch * ch * F + ch * F);
    add("postnet.lin", F * F + F, F * F);
  }

  rep.finalize();
  return rep;
}

/// The matching uncompressed architecture (ratios 1x1, no post network).
inline ModelConfig uncompressed_of(const ModelConfig& cfg) {
  ModelConfig base = cfg;
  base.freq_method = FreqMethod::none;
  base.freq_ratio = 1;
  base.time_ratio = 1;
  base.postnet.enabled = false;
  return base;
}

inline double compression_ratio(const ModelConfig& cfg, int bins = 161) {
  return profile(uncompressed_of(cfg), bins).macs_per_second / profile(cfg, bins).macs_per_second;
}

}  // namespace dpc
