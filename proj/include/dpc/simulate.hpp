#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpc/common.hpp"

// Scenario synthesis: near-end speech + echo (far-end through an impulse
// response or a pure delay) + noise, mixed at controlled SER/SNR over
// active regions. Deterministic given the seed.

namespace dpc {

enum class Scenario { st_fe, st_ne, dt };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::st_fe: return "ST-FE";
    case Scenario::st_ne: return "ST-NE";
    default: return "DT";
  }
}

struct MixSpec {
  double ser_db = 0.0;   // +inf: no echo; -inf: near end absent
  double snr_db = 10.0;  // +inf: no noise
  Scenario scenario = Scenario::dt;
  uint64_t seed = 0;

  void validate() const {
    bool ne = std::isinf(ser_db) && ser_db > 0;
    bool fe = std::isinf(ser_db) && ser_db < 0;
    if (ne != (scenario == Scenario::st_ne))
      throw ConfigError("mix: SER=+inf if and only if scenario is ST-NE");
    if (fe != (scenario == Scenario::st_fe))
      throw ConfigError("mix: near end absent (SER=-inf) if and only if scenario is ST-FE");
    if (std::isinf(snr_db) && snr_db < 0) throw ConfigError("mix: SNR=-inf is not meaningful");
  }
};

struct MixResult {
  std::vector<float> mic, farend, target;
  double measured_ser_db = std::numeric_limits<double>::quiet_NaN();
  double measured_snr_db = std::numeric_limits<double>::quiet_NaN();
  int echo_delay = 0;     // samples, when no impulse response was given
  double output_gain = 1.0;  // common anti-clipping gain applied to all outputs

  nlohmann::json manifest(const MixSpec& spec) const {
    nlohmann::json j = {{"scenario", to_string(spec.scenario)},
                        {"seed", spec.seed},
                        {"echo_delay", echo_delay},
                        {"output_gain", output_gain}};
    auto db = [](double v) {
      return std::isfinite(v) ? nlohmann::json(v)
                              : nlohmann::json(v > 0 ? "+inf" : "-inf");
    };
    j["ser_db"] = db(spec.ser_db);
    j["snr_db"] = db(spec.snr_db);
    if (std::isfinite(measured_ser_db)) j["measured_ser_db"] = measured_ser_db;
    if (std::isfinite(measured_snr_db)) j["measured_snr_db"] = measured_snr_db;
    return j;
  }
};

namespace detail {

inline constexpr size_t kClipSamples = 10 * 16000;
inline constexpr size_t kMinSamples = 9 * 16000;
inline constexpr int kPowerFrame = 160;
inline constexpr double kActiveFloor = 1e-6;  // -60 dBFS on frame mean square

/// Mean square over frames whose own mean square clears -60 dBFS.
inline double active_power(std::span<const float> x) {
  double total = 0.0;
  size_t active = 0;
  for (size_t start = 0; start + kPowerFrame <= x.size(); start += kPowerFrame) {
    double acc = 0.0;
    for (int i = 0; i < kPowerFrame; ++i) {
      double v = x[start + i];
      acc += v * v;
    }
    acc /= kPowerFrame;
    if (acc > kActiveFloor) {
      total += acc;
      ++active;
    }
  }
  return active == 0 ? 0.0 : total / active;
}

inline std::vector<float> fit_length(std::span<const float> x, const char* what) {
  if (x.size() < kMinSamples)
    throw std::invalid_argument(std::string("mix: ") + what + " clip shorter than 9 s");
  std::vector<float> out(x.begin(), x.begin() + std::min(x.size(), kClipSamples));
  out.resize(kClipSamples, 0.0f);
  return out;
}

/// Full linear convolution truncated to the clip length.
inline std::vector<float> convolve_truncated(const std::vector<float>& x,
                                             std::span<const float> h) {
  std::vector<float> y(x.size(), 0.0f);
  for (size_t n = 0; n < y.size(); ++n) {
    double acc = 0.0;
    size_t kmax = std::min(h.size() - 1, n);
    for (size_t k = 0; k <= kmax; ++k) acc += static_cast<double>(h[k]) * x[n - k];
    y[n] = static_cast<float>(acc);
  }
  return y;
}

}  // namespace detail

/// Mixes one clip. All inputs must be at least 9 s; everything is trimmed or
/// zero-padded to exactly 10 s. The echo path is far * rir (or a seeded pure
/// delay of 1..100 ms when rir is empty).
inline MixResult mix(std::span<const float> near, std::span<const float> far,
                     std::span<const float> noise, std::span<const float> rir,
                     const MixSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  bool near_present = spec.scenario != Scenario::st_fe;
  bool echo_present = spec.scenario != Scenario::st_ne;
  bool noise_present = !(std::isinf(spec.snr_db) && spec.snr_db > 0);

  MixResult res;
  auto nearv = detail::fit_length(near, "near");
  auto farv = detail::fit_length(far, "far");
  auto noisev = detail::fit_length(noise, "noise");
  if (!near_present) std::fill(nearv.begin(), nearv.end(), 0.0f);

  std::vector<float> echo;
  if (echo_present) {
    if (rir.empty()) {
      std::uniform_int_distribution<int> delay_dist(16, 1600);
      res.echo_delay = delay_dist(rng);
      echo.assign(farv.size(), 0.0f);
      for (size_t i = res.echo_delay; i < farv.size(); ++i)
        echo[i] = farv[i - res.echo_delay];
    } else {
      echo = detail::convolve_truncated(farv, rir);
    }
  } else {
    echo.assign(farv.size(), 0.0f);
  }

  double p_near = detail::active_power(nearv);
  double p_echo = detail::active_power(echo);
  double p_noise = detail::active_power(noisev);
  // reference power for the ratios: near end, or the echo in ST-FE
  double g_echo = 0.0, g_noise = 0.0;
  if (echo_present) {
    if (p_echo == 0.0) throw std::invalid_argument("mix: silent echo with a finite SER requested");
    if (near_present) {
      if (p_near == 0.0)
        throw std::invalid_argument("mix: silent near end with a finite SER requested");
      g_echo = std::sqrt(p_near / (p_echo * std::pow(10.0, spec.ser_db / 10.0)));
    } else {
      g_echo = 1.0;
    }
  }
  if (noise_present) {
    if (p_noise == 0.0)
      throw std::invalid_argument("mix: silent noise with a finite SNR requested");
    double p_ref = near_present ? p_near : p_echo * g_echo * g_echo;
    if (p_ref == 0.0)
      throw std::invalid_argument("mix: no reference signal to set the SNR against");
    g_noise = std::sqrt(p_ref / (p_noise * std::pow(10.0, spec.snr_db / 10.0)));
  }

  res.mic.resize(nearv.size());
  for (size_t i = 0; i < res.mic.size(); ++i) {
    echo[i] *= static_cast<float>(g_echo);
    noisev[i] *= static_cast<float>(g_noise);
    res.mic[i] = nearv[i] + echo[i] + noisev[i];
  }
  res.farend = std::move(farv);
  res.target = std::move(nearv);

  // common gain keeps the mic inside [-1, 1] without touching the ratios
  float peak = 0.0f;
  for (float v : res.mic) peak = std::max(peak, std::abs(v));
  if (peak > 0.999f) {
    res.output_gain = 0.999 / peak;
    for (auto* vec : {&res.mic, &res.farend, &res.target}) {
      for (float& v : *vec) v = static_cast<float>(v * res.output_gain);
    }
    for (float& v : echo) v = static_cast<float>(v * res.output_gain);
    for (float& v : noisev) v = static_cast<float>(v * res.output_gain);
  }

  double pm_near = detail::active_power(res.target);
  double pm_echo = detail::active_power(echo);
  double pm_noise = detail::active_power(noisev);
  if (near_present && echo_present && pm_echo > 0.0)
    res.measured_ser_db = 10.0 * std::log10(pm_near / pm_echo);
  if (noise_present && pm_noise > 0.0) {
    double p_ref = near_present ? pm_near : pm_echo;
    res.measured_snr_db = 10.0 * std::log10(p_ref / pm_noise);
  }
  return res;
}

/// Draws one clip's scenario per the corpus recipe: near end absent 10%,
/// far end absent 25% (never both), ~90% of clips noisy, SER and SNR
/// uniform in [-5, 15] dB.
inline MixSpec sample_mix_spec(uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> level(-5.0, 15.0);
  MixSpec spec;
  spec.seed = seed;
  bool near_absent = u01(rng) < 0.10;
  bool far_absent = !near_absent && u01(rng) < 0.25;
  bool noisy = u01(rng) < 0.90;
  double ser = level(rng);
  double snr = level(rng);
  if (near_absent) {
    spec.scenario = Scenario::st_fe;
    spec.ser_db = -std::numeric_limits<double>::infinity();
  } else if (far_absent) {
    spec.scenario = Scenario::st_ne;
    spec.ser_db = std::numeric_limits<double>::infinity();
  } else {
    spec.scenario = Scenario::dt;
    spec.ser_db = ser;
  }
  spec.snr_db = noisy ? snr : std::numeric_limits<double>::infinity();
  return spec;
}

}  // namespace dpc
