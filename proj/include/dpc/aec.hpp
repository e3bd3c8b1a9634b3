#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpc/common.hpp"
#include "dpc/stft.hpp"

// Frequency-domain state-space adaptive filter (diagonal Kalman form).
// Per bin it tracks K complex taps over the reference history, a per-tap
// uncertainty P, and a per-bin observation-noise estimate R driven by the
// residual. The gain g = (P+q) x* / (sum_k (P+q)|x_k|^2 + R) keeps adaptation
// fast while the residual is echo-dominated and backs off when it is not.

namespace dpc {

struct AecConfig {
  int taps = 10;                   // K, 100 ms tail at 10 ms hop
  double process_noise = 1e-6;     // q, added to P every frame
  double obs_noise_floor = 1e-8;   // absolute floor on R (signal-power units)
  double cov_init = 1e-2;          // initial per-tap uncertainty
  double noise_rise = 0.5;         // R smoothing when |e|^2 > R
  double noise_decay = 0.999;      // R smoothing when |e|^2 <= R

  void validate() const {
    if (taps < 1) throw ConfigError("aec: taps must be >= 1");
    if (process_noise < 0 || obs_noise_floor < 0 || cov_init < 0)
      throw ConfigError("aec: noise parameters must be >= 0");
  }
};

class AecState {
 public:
  AecState(const AecConfig& cfg, int bins) : cfg_(cfg), bins_(bins), taps_(cfg.taps) {
    cfg_.validate();
    size_t n = static_cast<size_t>(bins_) * taps_;
    weights_.assign(n, {0.0, 0.0});
    cov_.assign(n, cfg_.cov_init);
    hist_.assign(n, {0.0, 0.0});
    noise_.assign(bins_, 0.0);
  }

  int bins() const { return bins_; }
  int taps() const { return taps_; }
  const std::vector<std::complex<double>>& weights() const { return weights_; }
  const std::vector<double>& cov() const { return cov_; }

  /// One frame: predicts the echo from the reference history, subtracts it,
  /// then updates taps and covariance. Strictly causal.
  void step(const cfloat* d_frame, const cfloat* x_frame, cfloat* e_frame) {
    const int K = taps_;
    // shift reference history (index 0 = current frame)
    for (int f = 0; f < bins_; ++f) {
      std::complex<double>* h = &hist_[static_cast<size_t>(f) * K];
      for (int k = K - 1; k > 0; --k) h[k] = h[k - 1];
      h[0] = std::complex<double>(x_frame[f].real(), x_frame[f].imag());
    }

    std::vector<std::complex<double>> err(bins_);
    double noise_sum = 0.0;
    for (int f = 0; f < bins_; ++f) {
      const std::complex<double>* h = &hist_[static_cast<size_t>(f) * K];
      const std::complex<double>* w = &weights_[static_cast<size_t>(f) * K];
      std::complex<double> yhat(0.0, 0.0);
      for (int k = 0; k < K; ++k) yhat += w[k] * h[k];
      std::complex<double> e = std::complex<double>(d_frame[f].real(), d_frame[f].imag()) - yhat;
      err[f] = e;
      double e2 = std::norm(e);
      if (first_frame_) {
        noise_[f] = e2;
      } else {
        double lam = e2 > noise_[f] ? cfg_.noise_rise : cfg_.noise_decay;
        noise_[f] = lam * noise_[f] + (1.0 - lam) * e2;
      }
      noise_sum += noise_[f];
    }
    first_frame_ = false;
    double spectral_floor = 0.3 * (noise_sum / bins_);

    for (int f = 0; f < bins_; ++f) {
      std::complex<double>* h = &hist_[static_cast<size_t>(f) * K];
      std::complex<double>* w = &weights_[static_cast<size_t>(f) * K];
      double* p = &cov_[static_cast<size_t>(f) * K];
      double xp = 0.0;
      for (int k = 0; k < K; ++k) xp += std::norm(h[k]);
      e_frame[f] = cfloat(static_cast<float>(err[f].real()), static_cast<float>(err[f].imag()));
      if (xp == 0.0) continue;  // no excitation: taps and covariance hold

      double r_eff = std::max({noise_[f], spectral_floor, cfg_.obs_noise_floor});
      double s = r_eff;
      for (int k = 0; k < K; ++k) s += (p[k] + cfg_.process_noise) * std::norm(h[k]);
      for (int k = 0; k < K; ++k) {
        double pm = p[k] + cfg_.process_noise;
        std::complex<double> g = pm * std::conj(h[k]) / s;
        w[k] += g * err[f];
        double shrink = 1.0 - (g * h[k]).real();
        p[k] = std::max(shrink * pm, 1e-12);
      }
    }
  }

 private:
  AecConfig cfg_;
  int bins_;
  int taps_;
  bool first_frame_ = true;
  std::vector<std::complex<double>> weights_;  // [f][k]
  std::vector<double> cov_;                    // [f][k]
  std::vector<std::complex<double>> hist_;     // [f][k], k=0 newest
  std::vector<double> noise_;                  // [f]
};

/// PCM-level wrapper: stft both signals, run the filter frame by frame,
/// overlap-add the residual. Output length matches the microphone signal.
inline std::vector<float> aec_process(std::span<const float> mic, std::span<const float> ref,
                                      const AecConfig& aec_cfg, const StftConfig& stft_cfg) {
  if (mic.empty() || ref.empty()) throw std::invalid_argument("aec_process: empty input");
  size_t n = std::max(mic.size(), ref.size());
  std::vector<float> d(mic.begin(), mic.end()), x(ref.begin(), ref.end());
  d.resize(n, 0.0f);
  x.resize(n, 0.0f);

  StftStream ds(stft_cfg), xs(stft_cfg);
  OlaStream ola(stft_cfg);
  AecState state(aec_cfg, stft_cfg.bins());
  ds.push(d);
  xs.push(x);
  std::vector<cfloat> df(stft_cfg.bins()), xf(stft_cfg.bins()), ef(stft_cfg.bins());
  std::vector<float> out;
  while (ds.frame_ready()) {
    ds.pop_frame(df.data());
    xs.pop_frame(xf.data());
    state.step(df.data(), xf.data(), ef.data());
    ola.push_frame(ef.data(), out);
  }
  ola.flush(out);
  out.resize(mic.size(), 0.0f);
  return out;
}

}  // namespace dpc
