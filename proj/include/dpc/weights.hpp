#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dpc/bands.hpp"
#include "dpc/common.hpp"
#include "dpc/model_config.hpp"

// Bit-exact container for named f32 tensors.
//
// Layout (little endian):
//   magic "DPCW" | version u32 | tensor count u32
//   per tensor: name length u16 | name bytes | dtype u8 (0 = f32) |
//               ndim u8 | dims u32[ndim] | payload f32[prod(dims)]

namespace dpc {

inline constexpr uint32_t kWeightFormatVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> data;

  size_t numel() const {
    size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

class WeightContainer {
 public:
  void add(std::string name, std::vector<uint32_t> dims, std::vector<float> data) {
    NamedTensor t{std::move(name), std::move(dims), std::move(data)};
    if (t.numel() != t.data.size())
      throw ConfigError("tensor '" + t.name + "': dims do not match payload");
    if (index_.count(t.name)) throw ConfigError("duplicate tensor name: " + t.name);
    index_[t.name] = tensors_.size();
    tensors_.push_back(std::move(t));
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const NamedTensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("missing tensor: " + name);
    return tensors_[it->second];
  }

  std::span<const float> view(const std::string& name) const {
    const auto& t = at(name);
    return {t.data.data(), t.data.size()};
  }

  std::span<float> mutable_view(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("missing tensor: " + name);
    auto& t = tensors_[it->second];
    return {t.data.data(), t.data.size()};
  }

  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  size_t total_params() const {
    size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create weights file: " + path);
    auto put_u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    f.write("DPCW", 4);
    put_u32(kWeightFormatVersion);
    put_u32(static_cast<uint32_t>(tensors_.size()));
    for (const auto& t : tensors_) {
      uint16_t len = static_cast<uint16_t>(t.name.size());
      f.write(reinterpret_cast<const char*>(&len), 2);
      f.write(t.name.data(), len);
      uint8_t dtype = 0, ndim = static_cast<uint8_t>(t.dims.size());
      f.write(reinterpret_cast<const char*>(&dtype), 1);
      f.write(reinterpret_cast<const char*>(&ndim), 1);
      for (uint32_t d : t.dims) put_u32(d);
      f.write(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
    }
    if (!f) throw IoError("failed writing weights file: " + path);
  }

  static WeightContainer load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open weights file: " + path);
    char magic[4];
    if (!f.read(magic, 4) || std::memcmp(magic, "DPCW", 4) != 0)
      throw IoError("bad magic in weights file: " + path);
    auto get_u32 = [&](const char* what) {
      uint32_t v;
      if (!f.read(reinterpret_cast<char*>(&v), 4)) throw IoError(std::string("truncated ") + what);
      return v;
    };
    uint32_t version = get_u32("header");
    if (version != kWeightFormatVersion)
      throw IoError("unsupported weights version " + std::to_string(version));
    uint32_t count = get_u32("header");
    WeightContainer w;
    for (uint32_t i = 0; i < count; ++i) {
      uint16_t len;
      if (!f.read(reinterpret_cast<char*>(&len), 2)) throw IoError("truncated tensor header");
      std::string name(len, '\0');
      if (!f.read(name.data(), len)) throw IoError("truncated tensor name");
      uint8_t dtype, ndim;
      if (!f.read(reinterpret_cast<char*>(&dtype), 1) ||
          !f.read(reinterpret_cast<char*>(&ndim), 1))
        throw IoError("truncated tensor header");
      if (dtype != 0) throw IoError("unsupported dtype tag for tensor " + name);
      std::vector<uint32_t> dims(ndim);
      size_t numel = 1;
      for (auto& d : dims) {
        d = get_u32("tensor dims");
        numel *= d;
      }
      std::vector<float> data(numel);
      if (!f.read(reinterpret_cast<char*>(data.data()), numel * sizeof(float)))
        throw IoError("truncated tensor: " + name);
      w.add(std::move(name), std::move(dims), std::move(data));
    }
    return w;
  }

 private:
  std::vector<NamedTensor> tensors_;
  std::unordered_map<std::string, size_t> index_;
};

enum class InitKind { uniform, one, zero, prelu_slope };

struct TensorSpec {
  std::string name;
  std::vector<uint32_t> dims;
  InitKind init = InitKind::uniform;
  int fan_in = 1;

  size_t numel() const {
    size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

/// Canonical tensor list for a model configuration. Order is load-bearing:
/// deterministic initialization draws tensors in this order.
inline std::vector<TensorSpec> param_schema(const ModelConfig& cfg, int bins) {
  cfg.validate();
  std::vector<TensorSpec> out;
  const int C = cfg.signals, E = cfg.feature_dim, G = cfg.conv_channels;
  const int r = cfg.time_ratio;
  const uint32_t uE = E, uG = G;

  auto add = [&](std::string name, std::vector<uint32_t> dims, InitKind k, int fan) {
    out.push_back({std::move(name), std::move(dims), k, fan});
  };
  auto linear = [&](const std::string& stem, uint32_t rows, uint32_t cols) {
    add(stem + ".w", {rows, cols}, InitKind::uniform, static_cast<int>(cols));
    add(stem + ".b", {rows}, InitKind::uniform, static_cast<int>(cols));
  };

  // compression / input layer
  if (cfg.freq_method == FreqMethod::trainable_mel) {
    auto layout = build_band_layout(BandScale::mel, bins, bands_for_ratio(bins, cfg.freq_ratio));
    for (int b = 0; b < layout.num_bands(); ++b)
      linear("fcomp.b" + std::to_string(b), uE,
             static_cast<uint32_t>(2 * C * r * layout.width(b)));
  } else if (cfg.freq_method == FreqMethod::none) {
    linear("in", uE, static_cast<uint32_t>(2 * C * r));
  } else {
    linear("in", uE, static_cast<uint32_t>(C * r));
  }

  auto conv = [&](const std::string& stem, uint32_t cout, uint32_t cin) {
    add(stem + ".w", {cout, cin, 3, 3}, InitKind::uniform, static_cast<int>(cin * 9));
    add(stem + ".b", {cout}, InitKind::uniform, static_cast<int>(cin * 9));
    add(stem + ".ln.g", {cout}, InitKind::one, 0);
    add(stem + ".ln.b", {cout}, InitKind::zero, 0);
    add(stem + ".prelu", {cout}, InitKind::prelu_slope, 0);
  };
  conv("enc.0", uG, uE);
  conv("enc.1", uE, uG);

  auto attn = [&](const std::string& stem) {
    for (const char* p : {"q", "k", "v", "o"}) linear(stem + "." + p, uE, uE);
    add(stem + ".ln.g", {uE}, InitKind::one, 0);
    add(stem + ".ln.b", {uE}, InitKind::zero, 0);
  };
  for (int i = 0; i < cfg.blocks; ++i) {
    std::string stem = "block." + std::to_string(i);
    attn(stem + ".attn_f");
    if (i == 0) {
      add(stem + ".gru.w_ih", {3 * uE, uE}, InitKind::uniform, E);
      add(stem + ".gru.w_hh", {3 * uE, uE}, InitKind::uniform, E);
      add(stem + ".gru.b_ih", {3 * uE}, InitKind::uniform, E);
      add(stem + ".gru.b_hh", {3 * uE}, InitKind::uniform, E);
      add(stem + ".gru.ln.g", {uE}, InitKind::one, 0);
      add(stem + ".gru.ln.b", {uE}, InitKind::zero, 0);
    }
    attn(stem + ".attn_t");
  }

  conv("dec.0", uG, uE);
  conv("dec.1", uE, uG);

  int out_in = E;
  if (cfg.freq_method == FreqMethod::trainable_mel) {
    auto layout = build_band_layout(BandScale::mel, bins, bands_for_ratio(bins, cfg.freq_ratio));
    for (int b = 0; b < layout.num_bands(); ++b)
      linear("fdec.b" + std::to_string(b), static_cast<uint32_t>(4 * C * layout.width(b)), uE);
    out_in = 4 * C;
  }
  linear("out", static_cast<uint32_t>(2 * C), static_cast<uint32_t>(out_in));

  if (cfg.postnet.enabled) {
    const auto& pn = cfg.postnet;
    auto layout = build_band_layout(BandScale::mel, bins, pn.bands);
    for (int b = 0; b < layout.num_bands(); ++b)
      linear("postnet.comp.b" + std::to_string(b), 1, static_cast<uint32_t>(2 * layout.width(b)));
    uint32_t H = pn.hidden;
    add("postnet.gru.w_ih", {3 * H, H}, InitKind::uniform, pn.hidden);
    add("postnet.gru.w_hh", {3 * H, H}, InitKind::uniform, pn.hidden);
    add("postnet.gru.b_ih", {3 * H}, InitKind::uniform, pn.hidden);
    add("postnet.gru.b_hh", {3 * H}, InitKind::uniform, pn.hidden);
    for (int b = 0; b < layout.num_bands(); ++b)
      linear("postnet.dec.b" + std::to_string(b),
             static_cast<uint32_t>(pn.channels * layout.width(b)), 1);
    uint32_t ch = pn.channels;
    linear("postnet.conv0", ch, ch);
    add("postnet.conv0.prelu", {ch}, InitKind::prelu_slope, 0);
    linear("postnet.conv1", 1, ch);
    linear("postnet.lin", static_cast<uint32_t>(bins), static_cast<uint32_t>(bins));
  }
  return out;
}

/// Seeded deterministic init: uniform(-a, a) with a = sqrt(1/fan_in) for
/// matrices and biases; LayerNorm and PReLU tensors use their standard
/// constants. The same seed always yields bit-identical containers.
inline WeightContainer init_weights(const ModelConfig& cfg, uint64_t seed, int bins = 161) {
  std::mt19937_64 rng(seed);
  auto uniform01 = [&]() {
    return static_cast<float>((rng() >> 40) * (1.0 / 16777216.0));  // 24-bit mantissa
  };
  WeightContainer w;
  for (const auto& spec : param_schema(cfg, bins)) {
    std::vector<float> data(spec.numel());
    switch (spec.init) {
      case InitKind::uniform: {
        float a = std::sqrt(1.0f / static_cast<float>(spec.fan_in));
        for (auto& v : data) v = a * (2.0f * uniform01() - 1.0f);
        break;
      }
      case InitKind::one: std::fill(data.begin(), data.end(), 1.0f); break;
      case InitKind::zero: std::fill(data.begin(), data.end(), 0.0f); break;
      case InitKind::prelu_slope: std::fill(data.begin(), data.end(), 0.25f); break;
    }
    w.add(spec.name, spec.dims, std::move(data));
  }
  return w;
}

/// Shape check of a loaded container against a configuration.
inline void validate_weights(const WeightContainer& w, const ModelConfig& cfg, int bins = 161) {
  auto schema = param_schema(cfg, bins);
  if (w.tensors().size() != schema.size())
    throw ConfigError("weights: tensor count " + std::to_string(w.tensors().size()) +
                      " does not match config (" + std::to_string(schema.size()) + ")");
  for (const auto& spec : schema) {
    const auto& t = w.at(spec.name);
    if (t.dims != spec.dims) throw ConfigError("weights: shape mismatch for tensor " + spec.name);
  }
}

}  // namespace dpc
