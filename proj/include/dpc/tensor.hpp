#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "dpc/common.hpp"

namespace dpc {

/// Complex time-frequency map, indexed [signal c][frame t][bin f].
struct TfMap {
  int signals = 0;
  int frames = 0;
  int bins = 0;
  std::vector<cfloat> data;

  TfMap() = default;
  TfMap(int c, int t, int f)
      : signals(c), frames(t), bins(f),
        data(static_cast<size_t>(c) * t * f) {}

  cfloat& at(int c, int t, int f) {
    return data[(static_cast<size_t>(c) * frames + t) * bins + f];
  }
  cfloat at(int c, int t, int f) const {
    return data[(static_cast<size_t>(c) * frames + t) * bins + f];
  }
  cfloat* frame(int c, int t) {
    return data.data() + (static_cast<size_t>(c) * frames + t) * bins;
  }
  const cfloat* frame(int c, int t) const {
    return data.data() + (static_cast<size_t>(c) * frames + t) * bins;
  }
  bool same_shape(const TfMap& o) const {
    return signals == o.signals && frames == o.frames && bins == o.bins;
  }
};

/// Real feature tensor. Stored channel-last: index [frame t][band b][channel e],
/// so per-position channel vectors are contiguous.
struct FeatureMap {
  int channels = 0;  // E
  int frames = 0;    // T
  int bands = 0;     // B (or F)
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int e, int t, int b)
      : channels(e), frames(t), bands(b),
        data(static_cast<size_t>(e) * t * b, 0.0f) {}

  float& at(int e, int t, int b) {
    return data[(static_cast<size_t>(t) * bands + b) * channels + e];
  }
  float at(int e, int t, int b) const {
    return data[(static_cast<size_t>(t) * bands + b) * channels + e];
  }
  float* pos(int t, int b) {
    return data.data() + (static_cast<size_t>(t) * bands + b) * channels;
  }
  const float* pos(int t, int b) const {
    return data.data() + (static_cast<size_t>(t) * bands + b) * channels;
  }
  /// Contiguous [bands x channels] slice of one frame.
  float* frame(int t) { return pos(t, 0); }
  const float* frame(int t) const { return pos(t, 0); }
};

}  // namespace dpc
