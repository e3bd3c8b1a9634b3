#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpc/common.hpp"

// Objective metrics. SI-SNR and ERLE are closed-form; STOI follows the
// standard construction: 10 kHz internal rate, silent-frame removal with a
// 40 dB dynamic range, 256-point frames at 50% overlap, 15 one-third-octave
// bands from 150 Hz, 384 ms segments with clipped normalized correlation.

namespace dpc {

inline constexpr double kSiSnrCapDb = 60.0;
inline constexpr double kErleCapDb = 80.0;

/// Scale-invariant SNR in dB, both signals mean-removed, capped at +-60 dB.
inline double si_snr(std::span<const float> est, std::span<const float> ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("si_snr: length mismatch");
  if (est.empty()) throw std::invalid_argument("si_snr: empty input");
  size_t n = ref.size();
  double me = 0.0, mr = 0.0;
  for (size_t i = 0; i < n; ++i) {
    me += est[i];
    mr += ref[i];
  }
  me /= n;
  mr /= n;
  double dot = 0.0, rr = 0.0;
  for (size_t i = 0; i < n; ++i) {
    dot += (est[i] - me) * (ref[i] - mr);
    rr += (ref[i] - mr) * (ref[i] - mr);
  }
  if (rr == 0.0) throw std::invalid_argument("si_snr: zero reference");
  double a = dot / rr;
  double sig = 0.0, err = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double s = a * (ref[i] - mr);
    double e = (est[i] - me) - s;
    sig += s * s;
    err += e * e;
  }
  if (sig == 0.0) return -kSiSnrCapDb;
  if (err == 0.0) return kSiSnrCapDb;
  return std::clamp(10.0 * std::log10(sig / err), -kSiSnrCapDb, kSiSnrCapDb);
}

/// Echo return loss enhancement over the whole file, capped at +-80 dB.
inline double erle(std::span<const float> mic, std::span<const float> out) {
  if (mic.size() != out.size()) throw std::invalid_argument("erle: length mismatch");
  if (mic.empty()) throw std::invalid_argument("erle: empty input");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < mic.size(); ++i) {
    num += static_cast<double>(mic[i]) * mic[i];
    den += static_cast<double>(out[i]) * out[i];
  }
  if (num == 0.0 && den == 0.0) return 0.0;
  if (den == 0.0) return kErleCapDb;
  if (num == 0.0) return -kErleCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kErleCapDb, kErleCapDb);
}

namespace detail {

inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (x / 2.0) * (x / 2.0) / (k * k);
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

/// Polyphase rational resampler with a Kaiser-windowed sinc lowpass
/// (half-length 10*max(up,down), beta 5).
inline std::vector<double> resample_poly(std::span<const float> x, int up, int down) {
  int max_rate = std::max(up, down);
  int half = 10 * max_rate;
  int taps = 2 * half + 1;
  double fc = 1.0 / max_rate;  // relative to the upsampled Nyquist
  std::vector<double> h(taps);
  double denom = bessel_i0(5.0);
  double sum = 0.0;
  for (int i = 0; i < taps; ++i) {
    double t = i - half;
    double sinc = t == 0.0 ? fc : std::sin(std::numbers::pi * fc * t) / (std::numbers::pi * t);
    double r = t / half;
    double win = bessel_i0(5.0 * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
    h[i] = sinc * win;
    sum += h[i];
  }
  for (auto& v : h) v *= up / sum;  // unit DC gain after upsampling

  size_t out_len = (x.size() * static_cast<size_t>(up) + down - 1) / down;
  std::vector<double> y(out_len, 0.0);
  for (size_t m = 0; m < out_len; ++m) {
    long long center = static_cast<long long>(m) * down + half;
    double acc = 0.0;
    // u[i] nonzero only at i = 5*j; k = center - i must stay within the filter
    long long j_lo = (center - (taps - 1) + up - 1) / up;
    long long j_hi = center / up;
    for (long long j = std::max<long long>(j_lo, 0);
         j <= std::min<long long>(j_hi, static_cast<long long>(x.size()) - 1); ++j) {
      acc += h[center - j * up] * x[j];
    }
    y[m] = acc;
  }
  return y;
}

struct StoiSetup {
  static constexpr int kFrame = 256;
  static constexpr int kHop = 128;
  static constexpr int kFft = 512;
  static constexpr int kBands = 15;
  static constexpr int kSegment = 30;   // frames per 384 ms segment
  static constexpr double kMinFreq = 150.0;
  static constexpr double kDynRange = 40.0;
  static constexpr double kClip = 5.62341325;  // 10^(15/20): -15 dB SDR lower bound
};

inline std::vector<double> hann_window(int n) {
  // periodic-style hann matching hanning(n+2) without the zero endpoints
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * (i + 1) / (n + 1)));
  return w;
}

/// Removes frames whose clean-signal energy is more than 40 dB below the
/// loudest frame; kept frames are overlap-added at compacted positions.
inline void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const int N = StoiSetup::kFrame, K = StoiSetup::kHop;
  if (x.size() < static_cast<size_t>(N)) {
    x.clear();
    y.clear();
    return;
  }
  auto w = hann_window(N);
  int frames = static_cast<int>((x.size() - N) / K) + 1;
  std::vector<double> energy(frames);
  double emax = -1e300;
  for (int t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
      double v = w[i] * x[t * K + i];
      acc += v * v;
    }
    energy[t] = 10.0 * std::log10(acc + 1e-300);
    emax = std::max(emax, energy[t]);
  }
  std::vector<int> kept;
  for (int t = 0; t < frames; ++t)
    if (energy[t] > emax - StoiSetup::kDynRange) kept.push_back(t);
  std::vector<double> xs(kept.empty() ? 0 : (kept.size() - 1) * K + N, 0.0);
  std::vector<double> ys(xs.size(), 0.0);
  for (size_t i = 0; i < kept.size(); ++i)
    for (int j = 0; j < N; ++j) {
      xs[i * K + j] += w[j] * x[kept[i] * K + j];
      ys[i * K + j] += w[j] * y[kept[i] * K + j];
    }
  x = std::move(xs);
  y = std::move(ys);
}

/// Hann-windowed magnitude-squared spectra, 512-point FFT via direct DFT of
/// the 256-sample frame (bins 0..256).
inline std::vector<std::vector<double>> stoi_spectra(const std::vector<double>& x) {
  const int N = StoiSetup::kFrame, K = StoiSetup::kHop, NF = StoiSetup::kFft;
  auto w = hann_window(N);
  int frames = x.size() < static_cast<size_t>(N)
                   ? 0
                   : static_cast<int>((x.size() - N) / K) + 1;
  std::vector<std::vector<double>> spec(frames, std::vector<double>(NF / 2 + 1));
  // precomputed twiddles for the 512-point grid
  std::vector<double> cos_t(NF), sin_t(NF);
  for (int i = 0; i < NF; ++i) {
    cos_t[i] = std::cos(2.0 * std::numbers::pi * i / NF);
    sin_t[i] = std::sin(2.0 * std::numbers::pi * i / NF);
  }
  for (int t = 0; t < frames; ++t) {
    for (int f = 0; f <= NF / 2; ++f) {
      double re = 0.0, im = 0.0;
      for (int i = 0; i < N; ++i) {
        double v = w[i] * x[t * K + i];
        int idx = (f * i) % NF;
        re += v * cos_t[idx];
        im -= v * sin_t[idx];
      }
      spec[t][f] = re * re + im * im;
    }
  }
  return spec;
}

/// One-third-octave band matrix over the 512-point bin grid at 10 kHz.
inline std::vector<std::pair<int, int>> third_octave_bands() {
  const double fs = 10000.0;
  const int NF = StoiSetup::kFft;
  std::vector<std::pair<int, int>> bands;
  auto nearest_bin = [&](double freq) {
    int best = 0;
    double best_d = 1e300;
    for (int i = 0; i <= NF / 2; ++i) {
      double f = fs * i / NF;
      double d = (f - freq) * (f - freq);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  };
  for (int k = 0; k < StoiSetup::kBands; ++k) {
    double lo = StoiSetup::kMinFreq * std::pow(2.0, (2.0 * k - 1.0) / 6.0);
    double hi = StoiSetup::kMinFreq * std::pow(2.0, (2.0 * k + 1.0) / 6.0);
    bands.emplace_back(nearest_bin(lo), nearest_bin(hi));
  }
  return bands;
}

}  // namespace detail

/// Short-time objective intelligibility of est against the clean ref.
/// Inputs are 16 kHz; at least ~400 ms of active reference is required.
inline double stoi(std::span<const float> est, std::span<const float> ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("stoi: length mismatch");
  auto y10 = detail::resample_poly(est, 5, 8);
  auto x10 = detail::resample_poly(ref, 5, 8);
  detail::remove_silent_frames(x10, y10);  // mask follows the clean signal
  auto xs = detail::stoi_spectra(x10);
  auto ys = detail::stoi_spectra(y10);
  int frames = static_cast<int>(xs.size());
  if (frames < detail::StoiSetup::kSegment)
    throw std::invalid_argument("stoi: input too short after silence removal");

  auto bands = detail::third_octave_bands();
  int B = static_cast<int>(bands.size());
  // band magnitudes [frame][band]
  std::vector<std::vector<double>> xb(frames, std::vector<double>(B));
  std::vector<std::vector<double>> yb(frames, std::vector<double>(B));
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < B; ++j) {
      double ax = 0.0, ay = 0.0;
      for (int f = bands[j].first; f < bands[j].second; ++f) {
        ax += xs[t][f];
        ay += ys[t][f];
      }
      xb[t][j] = std::sqrt(ax);
      yb[t][j] = std::sqrt(ay);
    }

  const int M = detail::StoiSetup::kSegment;
  double total = 0.0;
  int count = 0;
  for (int m = M; m <= frames; ++m) {
    for (int j = 0; j < B; ++j) {
      double nx = 0.0, ny = 0.0;
      for (int t = m - M; t < m; ++t) {
        nx += xb[t][j] * xb[t][j];
        ny += yb[t][j] * yb[t][j];
      }
      double alpha = std::sqrt(nx / std::max(ny, 1e-300));
      double sx = 0.0, sy = 0.0;
      double seg_x[detail::StoiSetup::kSegment], seg_y[detail::StoiSetup::kSegment];
      for (int t = m - M; t < m; ++t) {
        double xv = xb[t][j];
        double yv = std::min(alpha * yb[t][j], xv * (1.0 + detail::StoiSetup::kClip));
        seg_x[t - (m - M)] = xv;
        seg_y[t - (m - M)] = yv;
        sx += xv;
        sy += yv;
      }
      sx /= M;
      sy /= M;
      double dot = 0.0, xx = 0.0, yy = 0.0;
      for (int t = 0; t < M; ++t) {
        double a = seg_x[t] - sx, b = seg_y[t] - sy;
        dot += a * b;
        xx += a * a;
        yy += b * b;
      }
      double denom = std::sqrt(xx * yy);
      total += denom > 0.0 ? dot / denom : 0.0;
      ++count;
    }
  }
  return total / count;
}

}  // namespace dpc
