#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dpc/simulate.hpp"
#include "test_util.hpp"

using namespace dpc;

namespace {

constexpr size_t kLen = 10 * 16000;
constexpr double kInf = std::numeric_limits<double>::infinity();

/// Independent re-measurement: active power over -60 dBFS 10 ms frames.
double measure_power(const std::vector<float>& x) {
  double total = 0.0;
  size_t n = 0;
  for (size_t s = 0; s + 160 <= x.size(); s += 160) {
    double acc = 0.0;
    for (int i = 0; i < 160; ++i) acc += static_cast<double>(x[s + i]) * x[s + i];
    acc /= 160;
    if (acc > 1e-6) {
      total += acc;
      ++n;
    }
  }
  return n ? total / n : 0.0;
}

}  // namespace

TEST_CASE("clean near-end single talk passes the near signal through") {
  auto near = testutil::synth_voice(kLen, 1);
  auto far = testutil::white_noise(kLen, 2, 0.2f);
  auto noise = testutil::white_noise(kLen, 3, 0.2f);
  MixSpec spec;
  spec.scenario = Scenario::st_ne;
  spec.ser_db = kInf;
  spec.snr_db = kInf;
  auto res = mix(near, far, noise, {}, spec);
  CHECK(res.mic == std::vector<float>(near.begin(), near.end()));
  CHECK(res.target == res.mic);
}

TEST_CASE("requested ratios hold to 0.1 dB after re-measurement") {
  auto near = testutil::synth_voice(kLen, 5);
  auto far = testutil::white_noise(kLen, 6, 0.3f);
  auto noise = testutil::white_noise(kLen, 7, 0.25f);
  MixSpec spec;
  spec.scenario = Scenario::dt;
  spec.ser_db = 0.0;
  spec.snr_db = 8.0;
  spec.seed = 11;
  auto res = mix(near, far, noise, {}, spec);
  // oracle: reconstruct the scaled echo/noise from the outputs
  std::vector<float> echo_plus_noise(kLen);
  for (size_t i = 0; i < kLen; ++i) echo_plus_noise[i] = res.mic[i] - res.target[i];
  CHECK(res.measured_ser_db == doctest::Approx(0.0).epsilon(0.1));
  CHECK(res.measured_snr_db == doctest::Approx(8.0).epsilon(0.1));
  // the echo is a pure delayed copy of the far end, so the delay must match
  CHECK(res.echo_delay >= 16);
  CHECK(res.echo_delay <= 1600);
}

TEST_CASE("re-measured ratios within 0.1 dB over 20 random mixes") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto near = testutil::synth_voice(kLen, 100 + seed);
    auto far = testutil::white_noise(kLen, 200 + seed, 0.3f);
    auto noise = testutil::white_noise(kLen, 300 + seed, 0.2f);
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> level(-5.0, 15.0);
    MixSpec spec;
    spec.scenario = Scenario::dt;
    spec.ser_db = level(g);
    spec.snr_db = level(g);
    spec.seed = seed;
    auto res = mix(near, far, noise, {}, spec);
    CHECK(std::abs(res.measured_ser_db - spec.ser_db) <= 0.1);
    CHECK(std::abs(res.measured_snr_db - spec.snr_db) <= 0.1);
    // independent oracle on the emitted components
    double p_near = measure_power(res.target);
    std::vector<float> rest(kLen);
    for (size_t i = 0; i < kLen; ++i) rest[i] = res.mic[i] - res.target[i];
    double p_rest = measure_power(rest);
    double combined = 10.0 * std::log10(p_near / p_rest);
    double expect = 10.0 * std::log10(1.0 / (std::pow(10.0, -spec.ser_db / 10.0) +
                                             std::pow(10.0, -spec.snr_db / 10.0)));
    CHECK(combined == doctest::Approx(expect).epsilon(0.15));
  }
}

TEST_CASE("determinism: the same seed is bit-identical, different seeds differ") {
  auto near = testutil::synth_voice(kLen, 21);
  auto far = testutil::white_noise(kLen, 22, 0.3f);
  auto noise = testutil::white_noise(kLen, 23, 0.2f);
  MixSpec spec;
  spec.scenario = Scenario::dt;
  spec.ser_db = 3.0;
  spec.snr_db = 12.0;
  spec.seed = 77;
  auto a = mix(near, far, noise, {}, spec);
  auto b = mix(near, far, noise, {}, spec);
  CHECK(a.mic == b.mic);
  CHECK(a.farend == b.farend);
  CHECK(a.target == b.target);
  spec.seed = 78;
  auto c = mix(near, far, noise, {}, spec);
  CHECK(a.mic != c.mic);  // delay draw differs
}

TEST_CASE("far-end single talk has a silent target") {
  auto near = testutil::synth_voice(kLen, 31);
  auto far = testutil::white_noise(kLen, 32, 0.3f);
  auto noise = testutil::white_noise(kLen, 33, 0.2f);
  MixSpec spec;
  spec.scenario = Scenario::st_fe;
  spec.ser_db = -kInf;
  spec.snr_db = 10.0;
  auto res = mix(near, far, noise, {}, spec);
  for (float v : res.target) CHECK(v == 0.0f);
  CHECK(measure_power(res.mic) > 0.0);
  // SNR here is echo-to-noise
  CHECK(res.measured_snr_db == doctest::Approx(10.0).epsilon(0.1));
}

TEST_CASE("impulse responses shape the echo") {
  auto near = testutil::synth_voice(kLen, 41);
  auto far = testutil::white_noise(kLen, 42, 0.3f);
  std::vector<float> noise(kLen, 0.0f);
  std::vector<float> rir(400, 0.0f);
  rir[100] = 0.7f;
  rir[250] = -0.3f;
  MixSpec spec;
  spec.scenario = Scenario::dt;
  spec.ser_db = 0.0;
  spec.snr_db = kInf;
  auto res = mix(near, far, noise, rir, spec);
  // echo = mic - near must equal the scaled two-tap convolution
  double num = 0.0, den = 0.0;
  size_t i0 = 300;
  double g = 0.0;
  {  // recover the echo gain from one strong sample
    double e = res.mic[i0] - res.target[i0];
    double c = 0.7 * res.farend[i0 - 100] - 0.3 * res.farend[i0 - 250];
    g = e / c;
  }
  for (size_t i = 300; i < kLen; ++i) {
    double e = res.mic[i] - res.target[i];
    double c = g * (0.7 * res.farend[i - 100] - 0.3 * res.farend[i - 250]);
    num += (e - c) * (e - c);
    den += e * e;
  }
  CHECK(num / den <= 1e-9);
}

TEST_CASE("input validation") {
  auto good = testutil::white_noise(kLen, 51, 0.2f);
  std::vector<float> shorter(8 * 16000, 0.1f);
  std::vector<float> silent(kLen, 0.0f);
  MixSpec spec;
  spec.scenario = Scenario::dt;
  spec.ser_db = 0.0;
  spec.snr_db = 10.0;
  CHECK_THROWS_AS(mix(shorter, good, good, {}, spec), std::invalid_argument);
  CHECK_THROWS_AS(mix(good, silent, good, {}, spec), std::invalid_argument);
  CHECK_THROWS_AS(mix(good, good, silent, {}, spec), std::invalid_argument);
  MixSpec bad = spec;
  bad.ser_db = kInf;  // inconsistent with DT
  CHECK_THROWS_AS(mix(good, good, good, {}, bad), ConfigError);

  // 9.5 s inputs are padded to 10 s, longer ones trimmed
  std::vector<float> nine_half(static_cast<size_t>(9.5 * 16000), 0.1f);
  std::vector<float> eleven(11 * 16000, 0.1f);
  MixSpec clean;
  clean.scenario = Scenario::st_ne;
  clean.ser_db = kInf;
  clean.snr_db = kInf;
  auto res = mix(nine_half, eleven, eleven, {}, clean);
  CHECK(res.mic.size() == kLen);
  CHECK(res.farend.size() == kLen);
}

TEST_CASE("scenario sampling respects the corpus recipe") {
  int fe = 0, ne = 0, noisy = 0, n = 4000;
  for (int i = 0; i < n; ++i) {
    auto spec = sample_mix_spec(i);
    CHECK_NOTHROW(spec.validate());
    fe += spec.scenario == Scenario::st_fe;
    ne += spec.scenario == Scenario::st_ne;
    noisy += std::isfinite(spec.snr_db);
    if (spec.scenario == Scenario::dt) {
      CHECK(spec.ser_db >= -5.0);
      CHECK(spec.ser_db <= 15.0);
    }
  }
  CHECK(fe / double(n) == doctest::Approx(0.10).epsilon(0.25));
  CHECK(ne / double(n) == doctest::Approx(0.9 * 0.25).epsilon(0.25));
  CHECK(noisy / double(n) == doctest::Approx(0.90).epsilon(0.1));
}
