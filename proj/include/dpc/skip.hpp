#pragma once

#include <stdexcept>
#include <vector>

#include "dpc/common.hpp"
#include "dpc/tensor.hpp"

// Skip-prediction time compression: every r-th frame, the current frame and
// its r-1 predecessors are stacked and mapped to one feature frame; on the
// way back each feature frame is reused for its own frame and the next r-1.

namespace dpc {

inline bool valid_ratio(int r) {
  return r == 1 || r == 2 || r == 4 || r == 8 || r == 16 || r == 32;
}

inline int compressed_frames(int frames, int ratio) { return (frames + ratio - 1) / ratio; }

struct SkipConfig {
  int ratio = 1;
  int in_channels = 6;  // D
  int out_dim = 48;     // E
  std::vector<float> weight;  // [out_dim x (in_channels * ratio)]
  std::vector<float> bias;    // [out_dim]

  int stacked_dim() const { return in_channels * ratio; }

  void validate() const {
    if (!valid_ratio(ratio)) throw ConfigError("skip: ratio must be in {1,2,4,8,16,32}");
    if (static_cast<int>(weight.size()) != out_dim * stacked_dim() ||
        static_cast<int>(bias.size()) != out_dim)
      throw ConfigError("skip: weight shape mismatch");
  }
};

/// Output frame t' maps input frames [t'*r - r + 1 .. t'*r], zero-padded on
/// the left for the first group. Stacking is frame-major, oldest first.
inline FeatureMap skip_compress(const FeatureMap& x, const SkipConfig& cfg) {
  cfg.validate();
  if (x.channels != cfg.in_channels) throw std::invalid_argument("skip_compress: channel mismatch");
  int r = cfg.ratio;
  int tc = compressed_frames(x.frames, r);
  FeatureMap out(cfg.out_dim, tc, x.bands);
  int stacked = cfg.stacked_dim();
  std::vector<float> flat(stacked);
  for (int tp = 0; tp < tc; ++tp) {
    int t_cur = tp * r;
    for (int b = 0; b < x.bands; ++b) {
      for (int j = 0; j < r; ++j) {
        int t = t_cur - (r - 1) + j;
        for (int d = 0; d < cfg.in_channels; ++d)
          flat[j * cfg.in_channels + d] = t < 0 ? 0.0f : x.at(d, t, b);
      }
      float* dst = out.pos(tp, b);
      for (int e = 0; e < cfg.out_dim; ++e) {
        double acc = cfg.bias[e];
        const float* row = cfg.weight.data() + static_cast<size_t>(e) * stacked;
        for (int i = 0; i < stacked; ++i) acc += static_cast<double>(row[i]) * flat[i];
        dst[e] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

/// out[:, t, :] = feat[:, t / r, :]; each feature serves its own frame and
/// the following r-1 frames, never a past one.
inline FeatureMap skip_decompress(const FeatureMap& feat, int ratio, int frames) {
  if (!valid_ratio(ratio)) throw ConfigError("skip: ratio must be in {1,2,4,8,16,32}");
  if (feat.frames != compressed_frames(frames, ratio))
    throw std::invalid_argument("skip_decompress: frame counts inconsistent with ratio");
  FeatureMap out(feat.channels, frames, feat.bands);
  size_t row = static_cast<size_t>(feat.bands) * feat.channels;
  for (int t = 0; t < frames; ++t) {
    const float* src = feat.frame(t / ratio);
    std::copy(src, src + row, out.frame(t));
  }
  return out;
}

}  // namespace dpc
