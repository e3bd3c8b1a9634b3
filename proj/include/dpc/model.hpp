#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dpc/aec.hpp"
#include "dpc/bands.hpp"
#include "dpc/common.hpp"
#include "dpc/layers.hpp"
#include "dpc/model_config.hpp"
#include "dpc/postnet.hpp"
#include "dpc/stft.hpp"
#include "dpc/tensor.hpp"
#include "dpc/weights.hpp"

// The online dual-path network and its streaming engine. One Engine holds
// one stream's state (STFT framing, AEC taps, conv/GRU/attention state,
// the r-frame stacking ring and the held mask group); weights are read-only.
//
// Pipeline per full-rate frame:
//   stft(mic), stft(ref) -> AEC residual -> [every r-th frame: stack history,
//   frequency/time compression, encoder, dual-path blocks, decoder,
//   decompression, mask output] -> masks applied to the current spectra and
//   summed -> optional post network -> overlap-add.

namespace dpc {

/// 1x1 input layer over a stacked-plane map: [D, T, F] -> [E, T, F].
inline FeatureMap input_layer(const FeatureMap& stacked, std::span<const float> w,
                              std::span<const float> b, int out_dim) {
  if (static_cast<int>(w.size()) != out_dim * stacked.channels)
    throw ConfigError("input_layer: weight shape mismatch");
  FeatureMap out(out_dim, stacked.frames, stacked.bands);
  for (int t = 0; t < stacked.frames; ++t)
    for (int f = 0; f < stacked.bands; ++f)
      linear_apply(w, b, stacked.pos(t, f), out.pos(t, f), out_dim, stacked.channels);
  return out;
}

/// 1x1 output layer: [K, T, F] -> C complex masks (2C planes, Re then Im).
inline TfMap output_layer(const FeatureMap& feat, std::span<const float> w,
                          std::span<const float> b, int signals) {
  int planes = 2 * signals;
  if (static_cast<int>(w.size()) != planes * feat.channels)
    throw ConfigError("output_layer: weight shape mismatch");
  TfMap masks(signals, feat.frames, feat.bands);
  std::vector<float> raw(planes);
  for (int t = 0; t < feat.frames; ++t)
    for (int f = 0; f < feat.bands; ++f) {
      linear_apply(w, b, feat.pos(t, f), raw.data(), planes, feat.channels);
      for (int c = 0; c < signals; ++c) masks.at(c, t, f) = cfloat(raw[c], raw[signals + c]);
    }
  return masks;
}

/// Y[t,f] = sum_c M[c,t,f] * X[c,t,f].
inline TfMap apply_masks_and_sum(const TfMap& x, const TfMap& masks) {
  if (!x.same_shape(masks)) throw std::invalid_argument("apply_masks_and_sum: shape mismatch");
  TfMap y(1, x.frames, x.bins);
  for (int c = 0; c < x.signals; ++c)
    for (size_t i = 0; i < y.data.size(); ++i)
      y.data[i] += masks.data[static_cast<size_t>(c) * y.data.size() + i] *
                   x.data[static_cast<size_t>(c) * y.data.size() + i];
  return y;
}

class Engine {
 public:
  Engine(const RunConfig& cfg, WeightContainer weights)
      : cfg_(cfg), weights_(std::move(weights)), bins_(cfg.stft.bins()),
        mic_stft_(cfg.stft), ref_stft_(cfg.stft), ola_(cfg.stft),
        aec_(cfg.aec, bins_) {
    const ModelConfig& m = cfg_.model;
    m.validate();
    validate_weights(weights_, m, bins_);
    C_ = m.signals;
    E_ = m.feature_dim;
    r_ = m.time_ratio;
    bands_ = m.bands(bins_);

    if (m.freq_method == FreqMethod::trainable_mel) {
      layout_ = build_band_layout(BandScale::mel, bins_, bands_);
      for (int b = 0; b < bands_; ++b) {
        std::string stem = "fcomp.b" + std::to_string(b);
        comp_w_.push_back(weights_.view(stem + ".w"));
        comp_b_.push_back(weights_.view(stem + ".b"));
        stem = "fdec.b" + std::to_string(b);
        dec_w_.push_back(weights_.view(stem + ".w"));
        dec_b_.push_back(weights_.view(stem + ".b"));
      }
      ring_spec_.assign(static_cast<size_t>(r_) * C_ * bins_, cfloat(0, 0));
      wide_ch_ = 4 * C_;
    } else if (m.freq_method == FreqMethod::none) {
      in_w_ = weights_.view("in.w");
      in_b_ = weights_.view("in.b");
      ring_spec_.assign(static_cast<size_t>(r_) * C_ * bins_, cfloat(0, 0));
      wide_ch_ = E_;
    } else {
      bank_ = build_fixed_filterbank(
          m.freq_method == FreqMethod::fixed_erb ? BandScale::erb : BandScale::mel, bins_, bands_);
      in_w_ = weights_.view("in.w");
      in_b_ = weights_.view("in.b");
      ring_fixed_.assign(static_cast<size_t>(r_) * bands_ * C_, 0.0f);
      wide_ch_ = E_;
    }

    auto conv = [&](const std::string& stem, int cin, int cout) {
      return std::make_unique<CausalConv>(weights_.view(stem + ".w"), weights_.view(stem + ".b"),
                                          weights_.view(stem + ".ln.g"),
                                          weights_.view(stem + ".ln.b"),
                                          weights_.view(stem + ".prelu"), bands_, cin, cout);
    };
    enc0_ = conv("enc.0", E_, m.conv_channels);
    enc1_ = conv("enc.1", m.conv_channels, E_);
    dec0_ = conv("dec.0", E_, m.conv_channels);
    dec1_ = conv("dec.1", m.conv_channels, E_);

    auto attn = [&](const std::string& stem) {
      return AttentionWeights{weights_.view(stem + ".q.w"),  weights_.view(stem + ".q.b"),
                              weights_.view(stem + ".k.w"),  weights_.view(stem + ".k.b"),
                              weights_.view(stem + ".v.w"),  weights_.view(stem + ".v.b"),
                              weights_.view(stem + ".o.w"),  weights_.view(stem + ".o.b"),
                              weights_.view(stem + ".ln.g"), weights_.view(stem + ".ln.b")};
    };
    for (int i = 0; i < m.blocks; ++i) {
      std::string stem = "block." + std::to_string(i);
      attn_f_.push_back(attn(stem + ".attn_f"));
      attn_t_.push_back(
          std::make_unique<TimeAttention>(attn(stem + ".attn_t"), bands_, E_, m.heads));
      if (i == 0) {
        GruWeights gw{weights_.view(stem + ".gru.w_ih"), weights_.view(stem + ".gru.w_hh"),
                      weights_.view(stem + ".gru.b_ih"), weights_.view(stem + ".gru.b_hh")};
        gru_ = std::make_unique<GruSublayer>(gw, weights_.view(stem + ".gru.ln.g"),
                                             weights_.view(stem + ".gru.ln.b"), bands_, E_);
      }
    }
    out_w_ = weights_.view("out.w");
    out_b_ = weights_.view("out.b");
    if (m.postnet.enabled) postnet_.emplace(m.postnet, weights_, bins_);

    d_.resize(bins_);
    x_.resize(bins_);
    e_.resize(bins_);
    shat_.resize(bins_);
    out_frame_.resize(bins_);
    masks_.assign(static_cast<size_t>(C_) * bins_, cfloat(0, 0));
    feat_.resize(static_cast<size_t>(bands_) * E_);
    conv_tmp_.resize(static_cast<size_t>(bands_) * m.conv_channels);
    wide_.resize(static_cast<size_t>(bins_) * wide_ch_);
    stack_.reserve(1024);
  }

  int frames_processed() const { return t_; }

  void push(std::span<const float> mic, std::span<const float> ref) {
    mic_stft_.push(mic);
    ref_stft_.push(ref);
    while (mic_stft_.frame_ready() && ref_stft_.frame_ready()) process_frame();
  }

  /// Moves all samples produced so far to the caller.
  void drain(std::vector<float>& out) {
    out.insert(out.end(), pending_.begin(), pending_.end());
    pending_.clear();
  }

  /// Emits the overlap-add tail of the final frame.
  void finish(std::vector<float>& out) {
    drain(out);
    ola_.flush(out);
  }

 private:
  void process_frame() {
    mic_stft_.pop_frame(d_.data());
    ref_stft_.pop_frame(x_.data());
    aec_.step(d_.data(), x_.data(), e_.data());

    const ModelConfig& m = cfg_.model;
    int slot = t_ % r_;
    if (m.freq_method == FreqMethod::fixed_erb || m.freq_method == FreqMethod::fixed_mel) {
      // full-rate filterbank features feed the stacking ring
      float* dst = ring_fixed_.data() + static_cast<size_t>(slot) * bands_ * C_;
      const cfloat* specs[3] = {d_.data(), x_.data(), e_.data()};
      for (int b = 0; b < bands_; ++b)
        for (int c = 0; c < C_; ++c) {
          double acc = 0.0;
          for (int f = bank_.layout.low[b]; f < bank_.layout.high[b]; ++f)
            acc += std::abs(specs[c][f]) * static_cast<double>(bank_.w(b, f));
          dst[static_cast<size_t>(b) * C_ + c] = std::log(static_cast<float>(acc) + kLogEps);
        }
    } else {
      cfloat* dst = ring_spec_.data() + static_cast<size_t>(slot) * C_ * bins_;
      std::copy(d_.begin(), d_.end(), dst);
      std::copy(x_.begin(), x_.end(), dst + bins_);
      std::copy(e_.begin(), e_.end(), dst + 2 * static_cast<size_t>(bins_));
    }

    if (slot == 0) compressed_step();

    // apply the group's masks to the current spectra and sum
    const cfloat* specs[3] = {d_.data(), x_.data(), e_.data()};
    for (int f = 0; f < bins_; ++f) {
      cfloat acc(0, 0);
      for (int c = 0; c < C_; ++c) acc += masks_[static_cast<size_t>(c) * bins_ + f] * specs[c][f];
      shat_[f] = acc;
    }

    const cfloat* final_frame = shat_.data();
    if (postnet_) {
      postnet_->step(e_.data(), shat_.data(), out_frame_.data());
      final_frame = out_frame_.data();
    }
    ola_.push_frame(final_frame, pending_);
    ++t_;
  }

  /// Ring slots ordered oldest -> newest ending at the current frame.
  /// Slots older than the stream start read as zero frames.
  int ring_slot(int j) const {  // j = 0 oldest ... r-1 current
    int idx = t_ - (r_ - 1) + j;
    return idx < 0 ? -1 : idx % r_;
  }

  void compressed_step() {
    const ModelConfig& m = cfg_.model;
    // ---- compression to [bands][E] ----
    if (m.freq_method == FreqMethod::trainable_mel) {
      for (int b = 0; b < bands_; ++b) {
        int lo = layout_.low[b], width = layout_.width(b);
        stack_.assign(static_cast<size_t>(r_) * width * 2 * C_, 0.0f);
        for (int j = 0; j < r_; ++j) {
          int slot = ring_slot(j);
          if (slot < 0) continue;
          const cfloat* fr = ring_spec_.data() + static_cast<size_t>(slot) * C_ * bins_;
          float* dst = stack_.data() + static_cast<size_t>(j) * width * 2 * C_;
          for (int i = 0; i < width; ++i)
            for (int c = 0; c < 2 * C_; ++c)
              dst[i * 2 * C_ + c] = c < C_ ? fr[static_cast<size_t>(c) * bins_ + lo + i].real()
                                           : fr[static_cast<size_t>(c - C_) * bins_ + lo + i].imag();
        }
        linear_apply(comp_w_[b], comp_b_[b], stack_.data(),
                     feat_.data() + static_cast<size_t>(b) * E_, E_,
                     static_cast<int>(stack_.size()));
      }
    } else if (m.freq_method == FreqMethod::none) {
      stack_.resize(static_cast<size_t>(r_) * 2 * C_);
      for (int f = 0; f < bins_; ++f) {
        for (int j = 0; j < r_; ++j) {
          int slot = ring_slot(j);
          float* dst = stack_.data() + static_cast<size_t>(j) * 2 * C_;
          for (int c = 0; c < 2 * C_; ++c) {
            if (slot < 0) {
              dst[c] = 0.0f;
            } else {
              const cfloat* fr = ring_spec_.data() + static_cast<size_t>(slot) * C_ * bins_;
              dst[c] = c < C_ ? fr[static_cast<size_t>(c) * bins_ + f].real()
                              : fr[static_cast<size_t>(c - C_) * bins_ + f].imag();
            }
          }
        }
        linear_apply(in_w_, in_b_, stack_.data(), feat_.data() + static_cast<size_t>(f) * E_, E_,
                     static_cast<int>(stack_.size()));
      }
    } else {
      stack_.resize(static_cast<size_t>(r_) * C_);
      for (int b = 0; b < bands_; ++b) {
        for (int j = 0; j < r_; ++j) {
          int slot = ring_slot(j);
          for (int c = 0; c < C_; ++c)
            stack_[static_cast<size_t>(j) * C_ + c] =
                slot < 0 ? 0.0f
                         : ring_fixed_[static_cast<size_t>(slot) * bands_ * C_ +
                                       static_cast<size_t>(b) * C_ + c];
        }
        linear_apply(in_w_, in_b_, stack_.data(), feat_.data() + static_cast<size_t>(b) * E_, E_,
                     static_cast<int>(stack_.size()));
      }
    }

    // ---- encoder, dual-path blocks, decoder ----
    enc0_->step(feat_.data(), conv_tmp_.data());
    enc1_->step(conv_tmp_.data(), feat_.data());
    for (int i = 0; i < m.blocks; ++i) {
      attention_sublayer(attn_f_[i], feat_.data(), bands_, E_, m.heads, /*causal=*/false,
                         attn_scratch_);
      if (i == 0) gru_->step(feat_.data());
      attn_t_[i]->step(feat_.data());
    }
    dec0_->step(feat_.data(), conv_tmp_.data());
    dec1_->step(conv_tmp_.data(), feat_.data());

    // ---- decompression to [bins][wide_ch] ----
    if (m.freq_method == FreqMethod::trainable_mel) {
      for (int b = 0; b < bands_; ++b) {
        int lo = layout_.low[b], width = layout_.width(b);
        linear_apply(dec_w_[b], dec_b_[b], feat_.data() + static_cast<size_t>(b) * E_,
                     wide_.data() + static_cast<size_t>(lo) * wide_ch_, wide_ch_ * width, E_);
      }
    } else if (m.freq_method == FreqMethod::none) {
      std::copy(feat_.begin(), feat_.end(), wide_.begin());
    } else {
      std::fill(wide_.begin(), wide_.end(), 0.0f);
      for (int f = 0; f < bins_; ++f) {
        float* dst = wide_.data() + static_cast<size_t>(f) * E_;
        for (int b = 0; b < bands_; ++b) {
          float w = bank_.w_pinv(f, b);
          if (w == 0.0f) continue;
          const float* src = feat_.data() + static_cast<size_t>(b) * E_;
          for (int e = 0; e < E_; ++e) dst[e] += w * src[e];
        }
      }
    }

    // ---- mask output, held for the group ----
    std::vector<float> raw(static_cast<size_t>(2) * C_);
    for (int f = 0; f < bins_; ++f) {
      linear_apply(out_w_, out_b_, wide_.data() + static_cast<size_t>(f) * wide_ch_, raw.data(),
                   2 * C_, wide_ch_);
      for (int c = 0; c < C_; ++c)
        masks_[static_cast<size_t>(c) * bins_ + f] = cfloat(raw[c], raw[C_ + c]);
    }
  }

  RunConfig cfg_;
  WeightContainer weights_;
  int bins_, C_ = 3, E_ = 48, r_ = 1, bands_ = 161, wide_ch_ = 48;
  int t_ = 0;

  StftStream mic_stft_, ref_stft_;
  OlaStream ola_;
  AecState aec_;

  BandLayout layout_;
  FixedFilterBank bank_;
  std::vector<std::span<const float>> comp_w_, comp_b_, dec_w_, dec_b_;
  std::span<const float> in_w_, in_b_, out_w_, out_b_;

  std::unique_ptr<CausalConv> enc0_, enc1_, dec0_, dec1_;
  std::vector<AttentionWeights> attn_f_;
  std::vector<std::unique_ptr<TimeAttention>> attn_t_;
  std::unique_ptr<GruSublayer> gru_;
  std::optional<PostNetStep> postnet_;

  std::vector<cfloat> d_, x_, e_, shat_, out_frame_, masks_, ring_spec_;
  std::vector<float> ring_fixed_, feat_, conv_tmp_, wide_, stack_, attn_scratch_;
  std::vector<float> pending_;
};

/// Runs the full pipeline over a pair of equal-role signals. chunk == 0
/// processes the whole input in one push; otherwise the input is fed in
/// chunk-sized pieces (both paths produce identical samples). The output
/// length always equals the microphone length.
inline std::vector<float> enhance(const RunConfig& cfg, const WeightContainer& weights,
                                  std::span<const float> mic, std::span<const float> ref,
                                  size_t chunk = 0) {
  if (mic.empty() || ref.empty()) throw std::invalid_argument("enhance: empty input");
  size_t n = std::max(mic.size(), ref.size());
  std::vector<float> d(mic.begin(), mic.end()), x(ref.begin(), ref.end());
  d.resize(n, 0.0f);
  x.resize(n, 0.0f);

  Engine engine(cfg, weights);
  std::vector<float> out;
  if (chunk == 0) {
    engine.push(d, x);
  } else {
    for (size_t pos = 0; pos < n; pos += chunk) {
      size_t len = std::min(chunk, n - pos);
      engine.push(std::span<const float>(d.data() + pos, len),
                  std::span<const float>(x.data() + pos, len));
    }
  }
  engine.finish(out);
  out.resize(mic.size(), 0.0f);
  return out;
}

}  // namespace dpc
