#pragma once

#include <cmath>
#include <vector>

#include "dpc/bands.hpp"
#include "dpc/common.hpp"
#include "dpc/layers.hpp"
#include "dpc/model_config.hpp"
#include "dpc/weights.hpp"

// Full-rate post network repairing skip-prediction artifacts: log-power
// features of the residual and the first-stage output are compressed to
// B Mel bands, run through a single causal GRU, decompressed, pushed
// through two 1x1 convs and a bin-axis linear map, and squashed to a real
// mask in [0, 1] that scales the first-stage spectrum.

namespace dpc {

class PostNetStep {
 public:
  PostNetStep(const PostNetConfig& cfg, const WeightContainer& w, int bins)
      : cfg_(cfg), bins_(bins), layout_(build_band_layout(BandScale::mel, bins, cfg.bands)) {
    int B = cfg_.bands;
    for (int b = 0; b < B; ++b) {
      std::string stem = "postnet.comp.b" + std::to_string(b);
      comp_w_.push_back(w.view(stem + ".w"));
      comp_b_.push_back(w.view(stem + ".b"));
      stem = "postnet.dec.b" + std::to_string(b);
      dec_w_.push_back(w.view(stem + ".w"));
      dec_b_.push_back(w.view(stem + ".b"));
    }
    gru_ = {w.view("postnet.gru.w_ih"), w.view("postnet.gru.w_hh"), w.view("postnet.gru.b_ih"),
            w.view("postnet.gru.b_hh")};
    conv0_w_ = w.view("postnet.conv0.w");
    conv0_b_ = w.view("postnet.conv0.b");
    conv0_slope_ = w.view("postnet.conv0.prelu");
    conv1_w_ = w.view("postnet.conv1.w");
    conv1_b_ = w.view("postnet.conv1.b");
    lin_w_ = w.view("postnet.lin.w");
    lin_b_ = w.view("postnet.lin.b");
    state_.assign(cfg_.hidden, 0.0f);
    compressed_.resize(cfg_.bands);
    feat_.resize(static_cast<size_t>(bins) * cfg_.channels);
    pre_lin_.resize(bins);
    logits_.resize(bins);
    flat_.reserve(64);
  }

  void reset() { std::fill(state_.begin(), state_.end(), 0.0f); }

  const std::vector<float>& last_mask() const { return logits_; }

  /// residual/first-stage spectra in, masked spectrum out (may alias s_hat).
  void step(const cfloat* e_hat, const cfloat* s_hat, cfloat* out) {
    // band compression of the two log-power planes (bin-major, channel-minor)
    for (int b = 0; b < cfg_.bands; ++b) {
      int lo = layout_.low[b], hi = layout_.high[b];
      flat_.resize(static_cast<size_t>(hi - lo) * 2);
      for (int f = lo; f < hi; ++f) {
        flat_[(f - lo) * 2 + 0] = std::log(std::norm(e_hat[f]) + kLogEps);
        flat_[(f - lo) * 2 + 1] = std::log(std::norm(s_hat[f]) + kLogEps);
      }
      linear_apply(comp_w_[b], comp_b_[b], flat_.data(), &compressed_[b], 1,
                   static_cast<int>(flat_.size()));
    }

    gru_cell(gru_, compressed_.data(), state_.data(), cfg_.bands, cfg_.hidden, gru_scratch_);

    // per-band decompression of the hidden state into [bins][channels]
    int ch = cfg_.channels;
    for (int b = 0; b < cfg_.bands; ++b) {
      int lo = layout_.low[b], width = layout_.width(b);
      linear_apply(dec_w_[b], dec_b_[b], &state_[b],
                   feat_.data() + static_cast<size_t>(lo) * ch, ch * width, 1);
    }

    // 1x1 convs per bin, then the bin-axis linear map and sigmoid
    std::vector<float>& tmp = conv_scratch_;
    tmp.resize(ch);
    for (int f = 0; f < bins_; ++f) {
      float* pos = feat_.data() + static_cast<size_t>(f) * ch;
      linear_apply(conv0_w_, conv0_b_, pos, tmp.data(), ch, ch);
      prelu(conv0_slope_, tmp.data(), ch);
      linear_apply(conv1_w_, conv1_b_, tmp.data(), &pre_lin_[f], 1, ch);
    }
    linear_apply(lin_w_, lin_b_, pre_lin_.data(), logits_.data(), bins_, bins_);
    for (int f = 0; f < bins_; ++f) {
      float m = fsigmoid(logits_[f]);
      logits_[f] = m;
      out[f] = cfloat(m * s_hat[f].real(), m * s_hat[f].imag());
    }
  }

 private:
  PostNetConfig cfg_;
  int bins_;
  BandLayout layout_;
  std::vector<std::span<const float>> comp_w_, comp_b_, dec_w_, dec_b_;
  GruWeights gru_;
  std::span<const float> conv0_w_, conv0_b_, conv0_slope_, conv1_w_, conv1_b_, lin_w_, lin_b_;
  std::vector<float> state_, compressed_, feat_, pre_lin_, logits_, flat_;
  std::vector<float> gru_scratch_, conv_scratch_;
};

}  // namespace dpc
