#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpc/common.hpp"
#include "dpc/tensor.hpp"

// Frequency-axis compression. Two families share the band-boundary machinery:
// fixed triangle filterbanks on a perceptual scale (with Moore-Penrose
// decompression) and trainable per-band linear transforms on a Mel partition.

namespace dpc {

enum class BandScale { erb, mel };

inline const char* to_string(BandScale s) { return s == BandScale::erb ? "erb" : "mel"; }

inline BandScale band_scale_from_string(const std::string& s) {
  if (s == "erb") return BandScale::erb;
  if (s == "mel") return BandScale::mel;
  throw ConfigError("unknown band scale: " + s);
}

namespace scales {

inline double mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_inv(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }
inline double erb_rate(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }
inline double erb_rate_inv(double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437; }

}  // namespace scales

/// Band boundaries over the bin axis. low[b] inclusive, high[b] exclusive.
/// Partition layouts tile [0, F) exactly; triangle layouts overlap.
struct BandLayout {
  BandScale scale = BandScale::mel;
  int num_bins = 0;  // F
  std::vector<int> low;
  std::vector<int> high;

  int num_bands() const { return static_cast<int>(low.size()); }
  int width(int b) const { return high[b] - low[b]; }

  void validate() const {
    int B = num_bands();
    if (B == 0 || static_cast<int>(high.size()) != B) throw ConfigError("band layout: empty");
    if (low[0] != 0 || high[B - 1] != num_bins)
      throw ConfigError("band layout: does not cover [0, F)");
    for (int b = 0; b < B; ++b) {
      if (low[b] >= high[b]) throw ConfigError("band layout: empty band");
      if (b > 0 && (low[b] < low[b - 1] || high[b] < high[b - 1]))
        throw ConfigError("band layout: boundaries not monotone");
    }
  }

  nlohmann::json to_json() const {
    return {{"scale", to_string(scale)}, {"num_bands", num_bands()},
            {"num_bins", num_bins}, {"low", low}, {"high", high}};
  }

  static BandLayout from_json(const nlohmann::json& j) {
    BandLayout l;
    l.scale = band_scale_from_string(j.at("scale").get<std::string>());
    l.num_bins = j.at("num_bins").get<int>();
    l.low = j.at("low").get<std::vector<int>>();
    l.high = j.at("high").get<std::vector<int>>();
    l.validate();
    if (l.num_bands() != j.at("num_bands").get<int>())
      throw ConfigError("band layout: num_bands mismatch");
    return l;
  }
};

namespace detail {

/// n_points strictly increasing bin marks from 0 to num_bins (inclusive ends),
/// equally spaced on the given perceptual scale over [0, 8000] Hz.
/// Rounding repair: duplicates advance forward, then gaps are smoothed until
/// non-decreasing (the scale inverses are convex, so true gaps grow).
inline std::vector<int> scale_marks(BandScale scale, int num_bins, int n_points) {
  double (*fwd)(double) = scale == BandScale::mel ? scales::mel : scales::erb_rate;
  double (*inv)(double) = scale == BandScale::mel ? scales::mel_inv : scales::erb_rate_inv;
  const double nyquist = 8000.0;
  double top = fwd(nyquist);
  std::vector<int> marks(n_points);
  for (int i = 0; i < n_points; ++i) {
    double hz = inv(top * i / (n_points - 1));
    marks[i] = static_cast<int>(std::lround(hz / nyquist * (num_bins - 1)));
  }
  marks.front() = 0;
  marks.back() = num_bins;

  auto enforce_min_width = [&] {
    for (int i = 1; i < n_points; ++i)
      if (marks[i] <= marks[i - 1]) marks[i] = marks[i - 1] + 1;
    marks.back() = num_bins;
    for (int i = n_points - 2; i >= 0; --i)
      if (marks[i] >= marks[i + 1]) marks[i] = marks[i + 1] - 1;
  };
  enforce_min_width();
  if (marks.front() != 0) throw std::invalid_argument("band layout: too many bands for bin count");

  for (int pass = 0; pass < 4 * n_points; ++pass) {
    bool changed = false;
    for (int i = 1; i < n_points - 1; ++i) {
      if (marks[i + 1] - marks[i] < marks[i] - marks[i - 1]) {
        --marks[i];
        changed = true;
      }
    }
    enforce_min_width();
    if (!changed) break;
  }
  return marks;
}

}  // namespace detail

/// Partition layout: B contiguous bands tiling [0, F), each bin in exactly one band.
inline BandLayout build_band_layout(BandScale scale, int num_bins, int num_bands) {
  if (num_bands < 1 || num_bands > num_bins)
    throw std::invalid_argument("build_band_layout: need 1 <= B <= F");
  auto marks = detail::scale_marks(scale, num_bins, num_bands + 1);
  BandLayout layout;
  layout.scale = scale;
  layout.num_bins = num_bins;
  layout.low.assign(marks.begin(), marks.end() - 1);
  layout.high.assign(marks.begin() + 1, marks.end());
  layout.validate();
  return layout;
}

inline int bands_for_ratio(int num_bins, int ratio) { return num_bins / ratio; }

/// Triangle filterbank: filter b rises from mark b to a peak of 1.0 at mark
/// b+1 and falls to zero at mark b+2 (the neighbours' peaks). Rows are not
/// normalized. W_pinv is the Moore-Penrose inverse.
struct FixedFilterBank {
  BandLayout layout;          // triangle supports (overlapping)
  std::vector<float> weights;  // [B][F]
  std::vector<float> pinv;     // [F][B]

  int num_bands() const { return layout.num_bands(); }
  int num_bins() const { return layout.num_bins; }

  float w(int b, int f) const { return weights[static_cast<size_t>(b) * num_bins() + f]; }
  float w_pinv(int f, int b) const { return pinv[static_cast<size_t>(f) * num_bands() + b]; }
};

inline FixedFilterBank build_fixed_filterbank(BandScale scale, int num_bins, int num_bands) {
  if (num_bands < 1 || num_bands > num_bins - 1)
    throw std::invalid_argument("build_fixed_filterbank: need 1 <= B <= F-1");
  auto marks = detail::scale_marks(scale, num_bins, num_bands + 2);
  FixedFilterBank fb;
  fb.layout.scale = scale;
  fb.layout.num_bins = num_bins;
  fb.layout.low.resize(num_bands);
  fb.layout.high.resize(num_bands);
  fb.weights.assign(static_cast<size_t>(num_bands) * num_bins, 0.0f);
  for (int b = 0; b < num_bands; ++b) {
    int lo = marks[b], peak = marks[b + 1], hi = marks[b + 2];
    fb.layout.low[b] = lo;
    fb.layout.high[b] = hi;
    for (int f = lo; f < peak; ++f)
      fb.weights[static_cast<size_t>(b) * num_bins + f] =
          static_cast<float>(static_cast<double>(f - lo) / (peak - lo));
    for (int f = peak; f < hi && f < num_bins; ++f)
      fb.weights[static_cast<size_t>(b) * num_bins + f] =
          static_cast<float>(static_cast<double>(hi - f) / (hi - peak));
  }
  fb.layout.validate();

  Eigen::MatrixXd W(num_bands, num_bins);
  for (int b = 0; b < num_bands; ++b)
    for (int f = 0; f < num_bins; ++f) W(b, f) = fb.w(b, f);
  Eigen::MatrixXd P = W.completeOrthogonalDecomposition().pseudoInverse();
  fb.pinv.resize(static_cast<size_t>(num_bins) * num_bands);
  for (int f = 0; f < num_bins; ++f)
    for (int b = 0; b < num_bands; ++b)
      fb.pinv[static_cast<size_t>(f) * num_bands + b] = static_cast<float>(P(f, b));
  return fb;
}

/// Z[c,t,b] = log(eps + sum_f |X[c,t,f]| * W[b,f])   (returned channel-last).
inline FeatureMap fixed_compress(const TfMap& x, const FixedFilterBank& fb) {
  if (x.bins != fb.num_bins()) throw std::invalid_argument("fixed_compress: bin mismatch");
  FeatureMap z(x.signals, x.frames, fb.num_bands());
  for (int c = 0; c < x.signals; ++c)
    for (int t = 0; t < x.frames; ++t) {
      const cfloat* fr = x.frame(c, t);
      for (int b = 0; b < fb.num_bands(); ++b) {
        double acc = 0.0;
        for (int f = fb.layout.low[b]; f < fb.layout.high[b]; ++f)
          acc += std::abs(fr[f]) * static_cast<double>(fb.w(b, f));
        z.at(c, t, b) = std::log(static_cast<float>(acc) + kLogEps);
      }
    }
  return z;
}

/// Per channel and frame: out[:, t, f] = sum_b feat[:, t, b] * W_pinv[f, b].
inline FeatureMap fixed_decompress(const FeatureMap& feat, const FixedFilterBank& fb) {
  if (feat.bands != fb.num_bands()) throw std::invalid_argument("fixed_decompress: band mismatch");
  FeatureMap out(feat.channels, feat.frames, fb.num_bins());
  for (int t = 0; t < feat.frames; ++t)
    for (int f = 0; f < fb.num_bins(); ++f) {
      float* dst = out.pos(t, f);
      for (int b = 0; b < fb.num_bands(); ++b) {
        float w = fb.w_pinv(f, b);
        if (w == 0.0f) continue;
        const float* src = feat.pos(t, b);
        for (int e = 0; e < feat.channels; ++e) dst[e] += w * src[e];
      }
    }
  return out;
}

/// Trainable per-band linear maps on a Mel partition. Compression flattens
/// [stacked frames r][bins of band][2C planes] -> E; decompression maps
/// E -> (4C * width) scattered back over the band's bins.
struct TrainableBandTransform {
  BandLayout layout;
  int in_channels = 6;   // 2C planes per bin per stacked frame
  int stack = 1;         // r stacked frames feeding the compression
  int out_dim = 48;      // E
  int dec_channels = 12;  // 4C
  // per band, row-major [out][in]
  std::vector<std::vector<float>> comp_w, dec_w;
  std::vector<std::vector<float>> comp_b, dec_b;

  int comp_in_dim(int b) const { return in_channels * stack * layout.width(b); }
  int dec_out_dim(int b) const { return dec_channels * layout.width(b); }

  void validate() const {
    layout.validate();
    int B = layout.num_bands();
    if (static_cast<int>(comp_w.size()) != B || static_cast<int>(dec_w.size()) != B ||
        static_cast<int>(comp_b.size()) != B || static_cast<int>(dec_b.size()) != B)
      throw ConfigError("trainable bands: matrix count mismatch");
    for (int b = 0; b < B; ++b) {
      if (static_cast<int>(comp_w[b].size()) != out_dim * comp_in_dim(b) ||
          static_cast<int>(comp_b[b].size()) != out_dim ||
          static_cast<int>(dec_w[b].size()) != dec_out_dim(b) * out_dim ||
          static_cast<int>(dec_b[b].size()) != dec_out_dim(b))
        throw ConfigError("trainable bands: matrix shape mismatch vs layout width");
    }
  }
};

/// Flatten order for one band and one frame: bin-major, channel-minor, with
/// channels ordered Re of all signals then Im of all signals.
inline void flatten_band(const TfMap& x, int t, int lo, int hi, float* out) {
  int C = x.signals;
  for (int f = lo; f < hi; ++f)
    for (int c = 0; c < 2 * C; ++c)
      out[(f - lo) * 2 * C + c] =
          c < C ? x.at(c, t, f).real() : x.at(c - C, t, f).imag();
}

/// Z[:,t,b] = comp_w[b] * Flatten(X[:, t, low[b]:high[b]]) + comp_b[b].
inline FeatureMap trainable_compress(const TfMap& x, const TrainableBandTransform& tb) {
  if (x.bins != tb.layout.num_bins) throw std::invalid_argument("trainable_compress: bin mismatch");
  if (tb.in_channels != 2 * x.signals || tb.stack != 1)
    throw std::invalid_argument("trainable_compress: transform expects stacked input");
  int B = tb.layout.num_bands();
  FeatureMap z(tb.out_dim, x.frames, B);
  std::vector<float> flat;
  for (int t = 0; t < x.frames; ++t)
    for (int b = 0; b < B; ++b) {
      int in_dim = tb.comp_in_dim(b);
      flat.resize(in_dim);
      flatten_band(x, t, tb.layout.low[b], tb.layout.high[b], flat.data());
      const float* w = tb.comp_w[b].data();
      float* dst = z.pos(t, b);
      for (int e = 0; e < tb.out_dim; ++e) {
        double acc = tb.comp_b[b][e];
        const float* row = w + static_cast<size_t>(e) * in_dim;
        for (int i = 0; i < in_dim; ++i) acc += static_cast<double>(row[i]) * flat[i];
        dst[e] = static_cast<float>(acc);
      }
    }
  return z;
}

/// Per band: E values -> 4C * width values scattered to the band's bins.
/// Output is channel-last [t][f][4C]; bins outside a band's range stay zero.
inline FeatureMap trainable_decompress(const FeatureMap& feat, const TrainableBandTransform& tb) {
  if (feat.bands != tb.layout.num_bands())
    throw std::invalid_argument("trainable_decompress: band mismatch");
  if (feat.channels != tb.out_dim)
    throw std::invalid_argument("trainable_decompress: channel mismatch");
  FeatureMap out(tb.dec_channels, feat.frames, tb.layout.num_bins);
  for (int t = 0; t < feat.frames; ++t)
    for (int b = 0; b < tb.layout.num_bands(); ++b) {
      const float* src = feat.pos(t, b);
      const float* w = tb.dec_w[b].data();
      int rows = tb.dec_out_dim(b);
      for (int r = 0; r < rows; ++r) {
        double acc = tb.dec_b[b][r];
        const float* row = w + static_cast<size_t>(r) * tb.out_dim;
        for (int e = 0; e < tb.out_dim; ++e) acc += static_cast<double>(row[e]) * src[e];
        int f = tb.layout.low[b] + r / tb.dec_channels;
        int c = r % tb.dec_channels;
        out.at(c, t, f) = static_cast<float>(acc);
      }
    }
  return out;
}

}  // namespace dpc
