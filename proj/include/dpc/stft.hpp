#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpc/common.hpp"
#include "dpc/tensor.hpp"

namespace dpc {

/// Causal STFT framing at 16 kHz: 20 ms square-root Hann window, 10 ms hop,
/// no zero padding (fft_size == window_len), F = fft_size/2 + 1 bins.
struct StftConfig {
  int sample_rate = 16000;
  int window_len = 320;
  int hop = 160;
  int fft_size = 320;
  std::vector<double> window;  // analysis == synthesis (sqrt-Hann)

  StftConfig() { window = sqrt_hann(window_len); }

  static std::vector<double> sqrt_hann(int n) {
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i)
      w[i] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n));
    return w;
  }

  int bins() const { return fft_size / 2 + 1; }

  void validate() const {
    if (fft_size < window_len) throw ConfigError("stft: fft_size < window_len");
    if (hop <= 0 || window_len % hop != 0) throw ConfigError("stft: hop must divide window_len");
    if (static_cast<int>(window.size()) != window_len)
      throw ConfigError("stft: window length mismatch");
  }

  /// Max relative deviation of the overlap-added analysis*synthesis window
  /// from a constant, over fully overlapped positions.
  double cola_deviation() const {
    int shifts = window_len / hop + 1;
    std::vector<double> acc((shifts - 1) * hop + window_len, 0.0);
    for (int k = 0; k < shifts; ++k)
      for (int i = 0; i < window_len; ++i) acc[k * hop + i] += window[i] * window[i];
    // positions [window_len - hop, window_len) see the full set of overlaps
    double ref = acc[window_len - hop], dev = 0.0;
    for (int i = window_len - hop; i < window_len; ++i)
      dev = std::max(dev, std::abs(acc[i] - ref));
    return dev / ref;
  }
};

/// RAII FFTW real<->complex transform of one fixed size (double precision).
class Dft {
 public:
  explicit Dft(int n) : n_(n) {
    real_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(n / 2 + 1);
    fwd_ = fftw_plan_dft_r2c_1d(n, real_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, spec_, real_, FFTW_ESTIMATE);
  }
  ~Dft() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  Dft(const Dft&) = delete;
  Dft& operator=(const Dft&) = delete;

  int size() const { return n_; }
  int bins() const { return n_ / 2 + 1; }

  /// in: n real samples -> out: n/2+1 bins.
  void forward(const double* in, cfloat* out) {
    std::memcpy(real_, in, sizeof(double) * n_);
    fftw_execute(fwd_);
    for (int f = 0; f < bins(); ++f)
      out[f] = cfloat(static_cast<float>(spec_[f][0]), static_cast<float>(spec_[f][1]));
  }

  /// in: n/2+1 bins -> out: n real samples (includes the 1/n normalization).
  void inverse(const cfloat* in, double* out) {
    for (int f = 0; f < bins(); ++f) {
      spec_[f][0] = in[f].real();
      spec_[f][1] = in[f].imag();
    }
    fftw_execute(inv_);
    double scale = 1.0 / n_;
    for (int i = 0; i < n_; ++i) out[i] = real_[i] * scale;
  }

 private:
  int n_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

/// Streaming analysis: push samples, frames come out as soon as a full
/// window is buffered. Frame t covers input samples [t*hop, t*hop + window_len).
class StftStream {
 public:
  explicit StftStream(const StftConfig& cfg)
      : cfg_(cfg), dft_(std::make_unique<Dft>(cfg.fft_size)), scratch_(cfg.fft_size, 0.0) {
    cfg_.validate();
  }

  void push(std::span<const float> samples) {
    buf_.insert(buf_.end(), samples.begin(), samples.end());
  }

  bool frame_ready() const {
    return buf_.size() - read_ >= static_cast<size_t>(cfg_.window_len);
  }

  /// Emits the next frame into out[bins()].
  void pop_frame(cfloat* out) {
    for (int i = 0; i < cfg_.window_len; ++i)
      scratch_[i] = static_cast<double>(buf_[read_ + i]) * cfg_.window[i];
    dft_->forward(scratch_.data(), out);
    read_ += cfg_.hop;
    if (read_ >= 65536) {  // compact the backlog
      buf_.erase(buf_.begin(), buf_.begin() + read_);
      read_ = 0;
    }
  }

 private:
  StftConfig cfg_;
  std::unique_ptr<Dft> dft_;
  std::vector<double> scratch_;
  std::vector<float> buf_;
  size_t read_ = 0;
};

/// Streaming synthesis by overlap-add: one frame in, hop samples out.
/// flush() emits the trailing window_len - hop samples.
class OlaStream {
 public:
  explicit OlaStream(const StftConfig& cfg)
      : cfg_(cfg), dft_(std::make_unique<Dft>(cfg.fft_size)),
        acc_(cfg.window_len, 0.0), scratch_(cfg.fft_size, 0.0) {}

  /// frame[bins()] -> appends hop samples to out.
  void push_frame(const cfloat* frame, std::vector<float>& out) {
    dft_->inverse(frame, scratch_.data());
    for (int i = 0; i < cfg_.window_len; ++i) acc_[i] += scratch_[i] * cfg_.window[i];
    for (int i = 0; i < cfg_.hop; ++i) out.push_back(static_cast<float>(acc_[i]));
    std::memmove(acc_.data(), acc_.data() + cfg_.hop,
                 sizeof(double) * (cfg_.window_len - cfg_.hop));
    std::fill(acc_.end() - cfg_.hop, acc_.end(), 0.0);
  }

  void flush(std::vector<float>& out) {
    for (int i = 0; i < cfg_.window_len - cfg_.hop; ++i)
      out.push_back(static_cast<float>(acc_[i]));
    std::fill(acc_.begin(), acc_.end(), 0.0);
  }

 private:
  StftConfig cfg_;
  std::unique_ptr<Dft> dft_;
  std::vector<double> acc_;
  std::vector<double> scratch_;
};

inline int stft_frame_count(size_t num_samples, const StftConfig& cfg) {
  if (num_samples < static_cast<size_t>(cfg.window_len))
    throw std::invalid_argument("stft: input shorter than one window");
  return static_cast<int>((num_samples - cfg.window_len) / cfg.hop) + 1;
}

inline TfMap stft(std::span<const float> samples, const StftConfig& cfg) {
  cfg.validate();
  int frames = stft_frame_count(samples.size(), cfg);
  TfMap map(1, frames, cfg.bins());
  Dft dft(cfg.fft_size);
  std::vector<double> buf(cfg.fft_size, 0.0);
  for (int t = 0; t < frames; ++t) {
    const float* src = samples.data() + static_cast<size_t>(t) * cfg.hop;
    for (int i = 0; i < cfg.window_len; ++i) buf[i] = static_cast<double>(src[i]) * cfg.window[i];
    dft.forward(buf.data(), map.frame(0, t));
  }
  return map;
}

/// Inverse with overlap-add; output length is (T-1)*hop + window_len.
inline std::vector<float> istft(const TfMap& map, const StftConfig& cfg) {
  cfg.validate();
  if (map.bins != cfg.bins()) throw std::invalid_argument("istft: bin count mismatch");
  std::vector<float> out;
  out.reserve(static_cast<size_t>(map.frames - 1) * cfg.hop + cfg.window_len);
  OlaStream ola(cfg);
  for (int t = 0; t < map.frames; ++t) ola.push_frame(map.frame(0, t), out);
  ola.flush(out);
  return out;
}

/// log(|X|^2 + eps), flattened in [c][t][f] order.
inline std::vector<float> log_power(const TfMap& map) {
  std::vector<float> out(map.data.size());
  for (size_t i = 0; i < map.data.size(); ++i) out[i] = std::log(std::norm(map.data[i]) + kLogEps);
  return out;
}

}  // namespace dpc
