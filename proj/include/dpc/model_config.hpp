#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dpc/aec.hpp"
#include "dpc/common.hpp"
#include "dpc/skip.hpp"
#include "dpc/stft.hpp"

namespace dpc {

enum class FreqMethod { none, fixed_erb, fixed_mel, trainable_mel };

inline const char* to_string(FreqMethod m) {
  switch (m) {
    case FreqMethod::none: return "none";
    case FreqMethod::fixed_erb: return "fixed_erb";
    case FreqMethod::fixed_mel: return "fixed_mel";
    default: return "trainable_mel";
  }
}

inline FreqMethod freq_method_from_string(const std::string& s) {
  if (s == "none") return FreqMethod::none;
  if (s == "fixed_erb") return FreqMethod::fixed_erb;
  if (s == "fixed_mel") return FreqMethod::fixed_mel;
  if (s == "trainable_mel") return FreqMethod::trainable_mel;
  throw ConfigError("unknown frequency compression method: " + s);
}

struct PostNetConfig {
  bool enabled = false;
  int bands = 80;      // B
  int hidden = 80;     // GRU width
  int channels = 24;   // decompression / conv width
};

struct ModelConfig {
  int signals = 3;        // C: microphone, reference, linear-AEC residual
  int feature_dim = 48;   // E
  int conv_channels = 16; // inner width of the 2-layer encoder/decoder
  int blocks = 4;
  int heads = 4;
  FreqMethod freq_method = FreqMethod::none;
  int freq_ratio = 1;
  int time_ratio = 1;
  PostNetConfig postnet;

  void validate() const {
    if (signals < 1) throw ConfigError("model: signals must be >= 1");
    if (feature_dim < 1 || heads < 1 || feature_dim % heads != 0)
      throw ConfigError("model: feature_dim must be divisible by heads");
    if (blocks < 1) throw ConfigError("model: blocks must be >= 1");
    if (conv_channels < 1) throw ConfigError("model: conv_channels must be >= 1");
    if (!valid_ratio(freq_ratio) || !valid_ratio(time_ratio))
      throw ConfigError("model: ratios must be in {1,2,4,8,16,32}");
    if ((freq_method == FreqMethod::none) != (freq_ratio == 1))
      throw ConfigError("model: freq_ratio 1 goes with method none, ratios > 1 need a method");
    if (postnet.enabled && (postnet.bands < 1 || postnet.hidden < 1 || postnet.channels < 1))
      throw ConfigError("model: bad postnet shape");
  }

  /// Feature-map width inside the compressed region.
  int bands(int bins) const {
    return freq_method == FreqMethod::none ? bins : bins / freq_ratio;
  }
};

struct RunConfig {
  StftConfig stft;
  AecConfig aec;
  ModelConfig model;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::string& where,
                                std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) { ok = true; break; }
    if (!ok) throw ConfigError("unknown config key '" + where + it.key() + "'");
  }
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig cfg;
  detail::reject_unknown_keys(j, "", {"version", "stft", "aec", "model", "freq", "time", "postnet"});
  if (j.contains("version") && j.at("version").get<int>() != 1)
    throw ConfigError("unsupported config version");
  if (j.contains("stft")) {
    const auto& s = j.at("stft");
    detail::reject_unknown_keys(s, "stft.", {"sample_rate", "window_len", "hop", "fft_size"});
    detail::maybe(s, "sample_rate", cfg.stft.sample_rate);
    detail::maybe(s, "window_len", cfg.stft.window_len);
    detail::maybe(s, "hop", cfg.stft.hop);
    detail::maybe(s, "fft_size", cfg.stft.fft_size);
    cfg.stft.window = StftConfig::sqrt_hann(cfg.stft.window_len);
  }
  if (j.contains("aec")) {
    const auto& a = j.at("aec");
    detail::reject_unknown_keys(a, "aec.", {"taps", "process_noise", "obs_noise_floor"});
    detail::maybe(a, "taps", cfg.aec.taps);
    detail::maybe(a, "process_noise", cfg.aec.process_noise);
    detail::maybe(a, "obs_noise_floor", cfg.aec.obs_noise_floor);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::reject_unknown_keys(m, "model.",
                                {"signals", "feature_dim", "conv_channels", "blocks", "heads"});
    detail::maybe(m, "signals", cfg.model.signals);
    detail::maybe(m, "feature_dim", cfg.model.feature_dim);
    detail::maybe(m, "conv_channels", cfg.model.conv_channels);
    detail::maybe(m, "blocks", cfg.model.blocks);
    detail::maybe(m, "heads", cfg.model.heads);
  }
  if (j.contains("freq")) {
    const auto& f = j.at("freq");
    detail::reject_unknown_keys(f, "freq.", {"method", "ratio"});
    std::string method = to_string(cfg.model.freq_method);
    detail::maybe(f, "method", method);
    cfg.model.freq_method = freq_method_from_string(method);
    detail::maybe(f, "ratio", cfg.model.freq_ratio);
  }
  if (j.contains("time")) {
    const auto& t = j.at("time");
    detail::reject_unknown_keys(t, "time.", {"ratio"});
    detail::maybe(t, "ratio", cfg.model.time_ratio);
  }
  if (j.contains("postnet")) {
    const auto& p = j.at("postnet");
    detail::reject_unknown_keys(p, "postnet.", {"enabled", "bands", "hidden", "channels"});
    detail::maybe(p, "enabled", cfg.model.postnet.enabled);
    detail::maybe(p, "bands", cfg.model.postnet.bands);
    detail::maybe(p, "hidden", cfg.model.postnet.hidden);
    detail::maybe(p, "channels", cfg.model.postnet.channels);
  }
  cfg.stft.validate();
  cfg.aec.validate();
  cfg.model.validate();
  return cfg;
}

inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  return {
      {"version", 1},
      {"stft", {{"sample_rate", cfg.stft.sample_rate}, {"window_len", cfg.stft.window_len},
                {"hop", cfg.stft.hop}, {"fft_size", cfg.stft.fft_size}}},
      {"aec", {{"taps", cfg.aec.taps}, {"process_noise", cfg.aec.process_noise},
               {"obs_noise_floor", cfg.aec.obs_noise_floor}}},
      {"model", {{"signals", cfg.model.signals}, {"feature_dim", cfg.model.feature_dim},
                 {"conv_channels", cfg.model.conv_channels}, {"blocks", cfg.model.blocks},
                 {"heads", cfg.model.heads}}},
      {"freq", {{"method", to_string(cfg.model.freq_method)}, {"ratio", cfg.model.freq_ratio}}},
      {"time", {{"ratio", cfg.model.time_ratio}}},
      {"postnet", {{"enabled", cfg.model.postnet.enabled}, {"bands", cfg.model.postnet.bands},
                   {"hidden", cfg.model.postnet.hidden}, {"channels", cfg.model.postnet.channels}}}};
}

/// Named presets covering the supported compression families:
///   uncompressed | fixed-erb-Q | fixed-mel-Q | trainmel-Q |
///   skippred-Q[-postnet] | dualpath-QtxQf   (Q in {2,4,8,16,32})
/// Dual-path presets use trainable Mel banks and enable the post network.
inline ModelConfig preset_model(const std::string& name) {
  ModelConfig cfg;
  auto parse_ratio = [&](const std::string& s) {
    int q = 0;
    try {
      size_t used = 0;
      q = std::stoi(s, &used);
      if (used != s.size()) q = 0;
    } catch (...) {
      q = 0;
    }
    if (!valid_ratio(q) || q == 1) throw ConfigError("preset: bad ratio in '" + name + "'");
    return q;
  };
  if (name == "uncompressed") return cfg;
  auto starts = [&](const char* p) { return name.rfind(p, 0) == 0; };
  if (starts("fixed-erb-")) {
    cfg.freq_method = FreqMethod::fixed_erb;
    cfg.freq_ratio = parse_ratio(name.substr(10));
  } else if (starts("fixed-mel-")) {
    cfg.freq_method = FreqMethod::fixed_mel;
    cfg.freq_ratio = parse_ratio(name.substr(10));
  } else if (starts("trainmel-")) {
    cfg.freq_method = FreqMethod::trainable_mel;
    cfg.freq_ratio = parse_ratio(name.substr(9));
  } else if (starts("skippred-")) {
    std::string rest = name.substr(9);
    if (rest.size() > 8 && rest.substr(rest.size() - 8) == "-postnet") {
      cfg.postnet.enabled = true;
      rest = rest.substr(0, rest.size() - 8);
    }
    cfg.time_ratio = parse_ratio(rest);
  } else if (starts("dualpath-")) {
    std::string rest = name.substr(9);
    auto x = rest.find('x');
    if (x == std::string::npos) throw ConfigError("preset: expected dualpath-QtxQf, got '" + name + "'");
    cfg.time_ratio = parse_ratio(rest.substr(0, x));
    cfg.freq_ratio = parse_ratio(rest.substr(x + 1));
    cfg.freq_method = FreqMethod::trainable_mel;
    cfg.postnet.enabled = true;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
  cfg.validate();
  return cfg;
}

inline RunConfig preset_run_config(const std::string& name) {
  RunConfig cfg;
  cfg.model = preset_model(name);
  return cfg;
}

}  // namespace dpc
