#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "dpc/common.hpp"

// Frame-level building blocks of the dual-path network. Everything here is
// float32 and allocation-free in the steady state; time-axis layers carry
// explicit per-stream state so that chunked and whole-file execution run the
// identical arithmetic.

namespace dpc {

inline constexpr float kLayerNormEps = 1e-5f;
inline constexpr float kAttnDenomFloor = 1e-6f;

/// y = W x + b with W row-major [out][in].
inline void linear_apply(std::span<const float> w, std::span<const float> b, const float* x,
                         float* y, int out, int in) {
  for (int o = 0; o < out; ++o) {
    float acc = b.empty() ? 0.0f : b[o];
    const float* row = w.data() + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

/// In-place layer norm over the channel axis.
inline void layer_norm(std::span<const float> gamma, std::span<const float> beta, float* x,
                       int dim) {
  float mean = 0.0f;
  for (int i = 0; i < dim; ++i) mean += x[i];
  mean /= dim;
  float var = 0.0f;
  for (int i = 0; i < dim; ++i) {
    float d = x[i] - mean;
    var += d * d;
  }
  var /= dim;
  float inv = 1.0f / std::sqrt(var + kLayerNormEps);
  for (int i = 0; i < dim; ++i) x[i] = gamma[i] * (x[i] - mean) * inv + beta[i];
}

inline void prelu(std::span<const float> slope, float* x, int dim) {
  for (int i = 0; i < dim; ++i)
    if (x[i] < 0.0f) x[i] *= slope[i];
}

inline float elu_plus_one(float u) { return u > 0.0f ? u + 1.0f : std::exp(u); }

/// Weight views of one attention sublayer (projections + layer norm).
struct AttentionWeights {
  std::span<const float> qw, qb, kw, kb, vw, vb, ow, ob, ln_g, ln_b;
};

/// Kernelized linear attention over a sequence held in a contiguous
/// [len][dim] buffer, followed by the output projection, residual add and
/// layer norm. Heads split the channel axis. Causal mode accumulates
/// prefix sums; bidirectional mode uses the full-sequence sums.
inline void attention_sublayer(const AttentionWeights& w, float* seq, int len, int dim, int heads,
                               bool causal, std::vector<float>& scratch) {
  const int hd = dim / heads;
  // scratch: q,k,v projections [len][dim] * 3, attn output [dim], sums S [heads][hd][hd], z [heads][hd]
  size_t proj = static_cast<size_t>(len) * dim;
  scratch.assign(proj * 3 + 2 * dim + static_cast<size_t>(heads) * hd * (hd + 1), 0.0f);
  float* q = scratch.data();
  float* k = q + proj;
  float* v = k + proj;
  float* attn = v + proj;
  float* proj_out = attn + dim;
  float* smat = proj_out + dim;                        // [heads][hd][hd]
  float* zvec = smat + static_cast<size_t>(heads) * hd * hd;  // [heads][hd]

  for (int i = 0; i < len; ++i) {
    const float* x = seq + static_cast<size_t>(i) * dim;
    linear_apply(w.qw, w.qb, x, q + static_cast<size_t>(i) * dim, dim, dim);
    linear_apply(w.kw, w.kb, x, k + static_cast<size_t>(i) * dim, dim, dim);
    linear_apply(w.vw, w.vb, x, v + static_cast<size_t>(i) * dim, dim, dim);
    float* qi = q + static_cast<size_t>(i) * dim;
    float* ki = k + static_cast<size_t>(i) * dim;
    for (int c = 0; c < dim; ++c) {
      qi[c] = elu_plus_one(qi[c]);
      ki[c] = elu_plus_one(ki[c]);
    }
  }

  auto accumulate = [&](int i) {
    const float* ki = k + static_cast<size_t>(i) * dim;
    const float* vi = v + static_cast<size_t>(i) * dim;
    for (int h = 0; h < heads; ++h) {
      float* S = smat + static_cast<size_t>(h) * hd * hd;
      float* z = zvec + static_cast<size_t>(h) * hd;
      const float* kh = ki + h * hd;
      const float* vh = vi + h * hd;
      for (int a = 0; a < hd; ++a) {
        float ka = kh[a];
        float* row = S + static_cast<size_t>(a) * hd;
        for (int c = 0; c < hd; ++c) row[c] += ka * vh[c];
        z[a] += ka;
      }
    }
  };
  auto read_out = [&](int i) {
    const float* qi = q + static_cast<size_t>(i) * dim;
    for (int h = 0; h < heads; ++h) {
      const float* S = smat + static_cast<size_t>(h) * hd * hd;
      const float* z = zvec + static_cast<size_t>(h) * hd;
      const float* qh = qi + h * hd;
      float den = kAttnDenomFloor;
      for (int a = 0; a < hd; ++a) den += qh[a] * z[a];
      float* out = attn + h * hd;
      for (int c = 0; c < hd; ++c) out[c] = 0.0f;
      for (int a = 0; a < hd; ++a) {
        float qa = qh[a];
        const float* row = S + static_cast<size_t>(a) * hd;
        for (int c = 0; c < hd; ++c) out[c] += qa * row[c];
      }
      float inv = 1.0f / den;
      for (int c = 0; c < hd; ++c) out[c] *= inv;
    }
  };

  if (!causal)
    for (int i = 0; i < len; ++i) accumulate(i);
  for (int i = 0; i < len; ++i) {
    if (causal) accumulate(i);
    read_out(i);
    float* x = seq + static_cast<size_t>(i) * dim;
    linear_apply(w.ow, w.ob, attn, proj_out, dim, dim);
    for (int c = 0; c < dim; ++c) x[c] += proj_out[c];
    layer_norm(w.ln_g, w.ln_b, x, dim);
  }
}

/// Causal linear attention along time, one band-parallel step at a time.
/// State: per (band, head) accumulators S [hd][hd] and z [hd].
class TimeAttention {
 public:
  TimeAttention(const AttentionWeights& w, int bands, int dim, int heads)
      : w_(w), bands_(bands), dim_(dim), heads_(heads), hd_(dim / heads),
        smat_(static_cast<size_t>(bands) * heads * hd_ * hd_, 0.0f),
        zvec_(static_cast<size_t>(bands) * heads * hd_, 0.0f),
        q_(dim), k_(dim), v_(dim), attn_(dim), proj_(dim) {}

  void reset() {
    std::fill(smat_.begin(), smat_.end(), 0.0f);
    std::fill(zvec_.begin(), zvec_.end(), 0.0f);
  }

  /// frame: contiguous [bands][dim], updated in place.
  void step(float* frame) {
    for (int b = 0; b < bands_; ++b) {
      float* x = frame + static_cast<size_t>(b) * dim_;
      linear_apply(w_.qw, w_.qb, x, q_.data(), dim_, dim_);
      linear_apply(w_.kw, w_.kb, x, k_.data(), dim_, dim_);
      linear_apply(w_.vw, w_.vb, x, v_.data(), dim_, dim_);
      for (int c = 0; c < dim_; ++c) {
        q_[c] = elu_plus_one(q_[c]);
        k_[c] = elu_plus_one(k_[c]);
      }
      float* S_b = smat_.data() + static_cast<size_t>(b) * heads_ * hd_ * hd_;
      float* z_b = zvec_.data() + static_cast<size_t>(b) * heads_ * hd_;
      for (int h = 0; h < heads_; ++h) {
        float* S = S_b + static_cast<size_t>(h) * hd_ * hd_;
        float* z = z_b + static_cast<size_t>(h) * hd_;
        const float* kh = k_.data() + h * hd_;
        const float* vh = v_.data() + h * hd_;
        const float* qh = q_.data() + h * hd_;
        for (int a = 0; a < hd_; ++a) {
          float ka = kh[a];
          float* row = S + static_cast<size_t>(a) * hd_;
          for (int c = 0; c < hd_; ++c) row[c] += ka * vh[c];
          z[a] += ka;
        }
        float den = kAttnDenomFloor;
        for (int a = 0; a < hd_; ++a) den += qh[a] * z[a];
        float* out = attn_.data() + h * hd_;
        for (int c = 0; c < hd_; ++c) out[c] = 0.0f;
        for (int a = 0; a < hd_; ++a) {
          float qa = qh[a];
          const float* row = S + static_cast<size_t>(a) * hd_;
          for (int c = 0; c < hd_; ++c) out[c] += qa * row[c];
        }
        float inv = 1.0f / den;
        for (int c = 0; c < hd_; ++c) out[c] *= inv;
      }
      linear_apply(w_.ow, w_.ob, attn_.data(), proj_.data(), dim_, dim_);
      for (int c = 0; c < dim_; ++c) x[c] += proj_[c];
      layer_norm(w_.ln_g, w_.ln_b, x, dim_);
    }
  }

 private:
  AttentionWeights w_;
  int bands_, dim_, heads_, hd_;
  std::vector<float> smat_, zvec_;
  std::vector<float> q_, k_, v_, attn_, proj_;
};

struct GruWeights {
  std::span<const float> w_ih, w_hh, b_ih, b_hh;  // gates ordered r, z, n
};

inline float fsigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

/// One GRU cell step; h is updated in place.
inline void gru_cell(const GruWeights& w, const float* x, float* h, int in, int hidden,
                     std::vector<float>& scratch) {
  scratch.resize(static_cast<size_t>(6) * hidden);
  float* gi = scratch.data();             // [3*hidden] from input
  float* gh = gi + 3 * hidden;            // [3*hidden] from state
  linear_apply(w.w_ih, w.b_ih, x, gi, 3 * hidden, in);
  linear_apply(w.w_hh, w.b_hh, h, gh, 3 * hidden, hidden);
  for (int i = 0; i < hidden; ++i) {
    float r = fsigmoid(gi[i] + gh[i]);
    float z = fsigmoid(gi[hidden + i] + gh[hidden + i]);
    float n = std::tanh(gi[2 * hidden + i] + r * gh[2 * hidden + i]);
    h[i] = (1.0f - z) * n + z * h[i];
  }
}

/// Band-parallel unidirectional GRU sublayer along time, with residual and
/// layer norm. Hidden size equals the channel count.
class GruSublayer {
 public:
  GruSublayer(const GruWeights& w, std::span<const float> ln_g, std::span<const float> ln_b,
              int bands, int dim)
      : w_(w), ln_g_(ln_g), ln_b_(ln_b), bands_(bands), dim_(dim),
        state_(static_cast<size_t>(bands) * dim, 0.0f) {}

  void reset() { std::fill(state_.begin(), state_.end(), 0.0f); }

  void step(float* frame) {
    for (int b = 0; b < bands_; ++b) {
      float* x = frame + static_cast<size_t>(b) * dim_;
      float* h = state_.data() + static_cast<size_t>(b) * dim_;
      gru_cell(w_, x, h, dim_, dim_, scratch_);
      for (int c = 0; c < dim_; ++c) x[c] += h[c];
      layer_norm(ln_g_, ln_b_, x, dim_);
    }
  }

 private:
  GruWeights w_;
  std::span<const float> ln_g_, ln_b_;
  int bands_, dim_;
  std::vector<float> state_;
  std::vector<float> scratch_;
};

/// 2-D convolution, kernel 3 (time, causal: current + 2 past frames) by
/// 3 (frequency, symmetric zero padding), followed by layer norm and PReLU.
/// Tap dt=2 is the current frame. State: the two previous input frames.
class CausalConv {
 public:
  CausalConv(std::span<const float> w, std::span<const float> b, std::span<const float> ln_g,
             std::span<const float> ln_b, std::span<const float> slope, int bands, int cin,
             int cout)
      : w_(w), b_(b), ln_g_(ln_g), ln_b_(ln_b), slope_(slope), bands_(bands), cin_(cin),
        cout_(cout), hist_(static_cast<size_t>(2) * bands * cin, 0.0f) {}

  void reset() { std::fill(hist_.begin(), hist_.end(), 0.0f); }

  /// in: [bands][cin] -> out: [bands][cout]; preserves `in` for the history.
  void step(const float* in, float* out) {
    const float* frames[3] = {hist_.data(),                                // t-2
                              hist_.data() + static_cast<size_t>(bands_) * cin_,  // t-1
                              in};
    for (int b = 0; b < bands_; ++b) {
      float* dst = out + static_cast<size_t>(b) * cout_;
      for (int o = 0; o < cout_; ++o) {
        float acc = b_[o];
        const float* wo = w_.data() + static_cast<size_t>(o) * cin_ * 9;
        for (int ci = 0; ci < cin_; ++ci) {
          const float* wk = wo + static_cast<size_t>(ci) * 9;
          for (int dt = 0; dt < 3; ++dt) {
            const float* fr = frames[dt];
            for (int df = -1; df <= 1; ++df) {
              int fb = b + df;
              if (fb < 0 || fb >= bands_) continue;
              acc += wk[dt * 3 + (df + 1)] * fr[static_cast<size_t>(fb) * cin_ + ci];
            }
          }
        }
        dst[o] = acc;
      }
      layer_norm(ln_g_, ln_b_, dst, cout_);
      prelu(slope_, dst, cout_);
    }
    // shift history
    std::memmove(hist_.data(), hist_.data() + static_cast<size_t>(bands_) * cin_,
                 sizeof(float) * bands_ * cin_);
    std::memcpy(hist_.data() + static_cast<size_t>(bands_) * cin_, in,
                sizeof(float) * bands_ * cin_);
  }

 private:
  std::span<const float> w_, b_, ln_g_, ln_b_, slope_;
  int bands_, cin_, cout_;
  std::vector<float> hist_;
};

}  // namespace dpc
