#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dpc/postnet.hpp"
#include "dpc/model_config.hpp"
#include "test_util.hpp"

using namespace dpc;

namespace {

constexpr int kBins = 161;

WeightContainer postnet_weights(uint64_t seed) {
  return init_weights(preset_model("skippred-2-postnet"), seed);
}

/// Forces the pre-sigmoid logits to a constant by zeroing the final linear
/// map and pinning its bias.
void saturate(WeightContainer& w, float logit) {
  auto lw = w.mutable_view("postnet.lin.w");
  std::fill(lw.begin(), lw.end(), 0.0f);
  auto lb = w.mutable_view("postnet.lin.b");
  std::fill(lb.begin(), lb.end(), logit);
}

std::vector<cfloat> random_frame(std::mt19937& g) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<cfloat> fr(kBins);
  for (auto& v : fr) v = cfloat(dist(g), dist(g));
  return fr;
}

}  // namespace

TEST_CASE("saturated masks: pass-through and full suppression") {
  PostNetConfig cfg;
  cfg.enabled = true;
  std::mt19937 g(3);

  SUBCASE("logits +20 pass the first-stage spectrum through") {
    auto w = postnet_weights(1);
    saturate(w, 20.0f);
    PostNetStep pn(cfg, w, kBins);
    std::vector<cfloat> out(kBins);
    for (int t = 0; t < 10; ++t) {
      auto e = random_frame(g), s = random_frame(g);
      pn.step(e.data(), s.data(), out.data());
      for (int f = 0; f < kBins; ++f) {
        CHECK(std::abs(out[f] - s[f]) <= 1e-6f * std::abs(s[f]) + 1e-9f);
      }
    }
  }
  SUBCASE("logits -20 suppress everything") {
    auto w = postnet_weights(2);
    saturate(w, -20.0f);
    PostNetStep pn(cfg, w, kBins);
    std::vector<cfloat> out(kBins);
    for (int t = 0; t < 10; ++t) {
      auto e = random_frame(g), s = random_frame(g);
      pn.step(e.data(), s.data(), out.data());
      for (int f = 0; f < kBins; ++f) CHECK(std::abs(out[f]) <= 1e-6f);
    }
  }
}

TEST_CASE("random weights: masks bounded in [0,1], magnitudes never amplified") {
  PostNetConfig cfg;
  cfg.enabled = true;
  std::mt19937 g(7);
  for (uint64_t seed : {10, 11, 12, 13, 14}) {
    auto w = postnet_weights(seed);
    PostNetStep pn(cfg, w, kBins);
    std::vector<cfloat> out(kBins);
    for (int t = 0; t < 20; ++t) {
      auto e = random_frame(g), s = random_frame(g);
      pn.step(e.data(), s.data(), out.data());
      for (int f = 0; f < kBins; ++f) {
        float m = pn.last_mask()[f];
        CHECK(m >= 0.0f);
        CHECK(m <= 1.0f);
        CHECK(std::abs(out[f]) <= std::abs(s[f]) * (1.0f + 1e-6f));
      }
    }
  }
}

TEST_CASE("the GRU runs strictly forward: past outputs never change") {
  PostNetConfig cfg;
  cfg.enabled = true;
  auto w = postnet_weights(21);
  PostNetStep a(cfg, w, kBins), b(cfg, w, kBins);
  std::mt19937 g(9);
  std::vector<cfloat> oa(kBins), ob(kBins);
  for (int t = 0; t < 12; ++t) {
    auto e = random_frame(g), s = random_frame(g);
    auto e2 = e, s2 = s;
    if (t >= 6) {
      for (auto& v : e2) v *= 3.0f;
      for (auto& v : s2) v += cfloat(0.5f, -0.5f);
    }
    a.step(e.data(), s.data(), oa.data());
    b.step(e2.data(), s2.data(), ob.data());
    if (t < 6)
      for (int f = 0; f < kBins; ++f) CHECK(oa[f] == ob[f]);
  }
}

TEST_CASE("silence stays silent") {
  PostNetConfig cfg;
  cfg.enabled = true;
  auto w = postnet_weights(31);
  PostNetStep pn(cfg, w, kBins);
  std::vector<cfloat> e(kBins, cfloat(0.01f, 0.0f)), s(kBins, cfloat(0, 0)), out(kBins);
  pn.step(e.data(), s.data(), out.data());
  for (auto v : out) CHECK(v == cfloat(0, 0));
}
