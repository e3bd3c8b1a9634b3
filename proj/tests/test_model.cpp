#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dpc/model.hpp"
#include "engine_util.hpp"
#include "test_util.hpp"

using namespace dpc;

namespace {

std::vector<float> random_vec(size_t n, uint32_t seed, float amp = 1.0f) {
  std::mt19937 g(seed);
  std::uniform_real_distribution<float> dist(-amp, amp);
  std::vector<float> out(n);
  for (auto& v : out) v = dist(g);
  return out;
}

AttentionWeights make_attn(std::vector<float>& store, int dim, uint32_t seed) {
  // store layout: qw kw vw ow (dim*dim each), qb kb vb ob (dim each), ln_g ln_b
  size_t mats = static_cast<size_t>(dim) * dim;
  store = random_vec(4 * mats + 6 * dim, seed, 0.3f);
  float* p = store.data();
  AttentionWeights w;
  w.qw = {p, mats};
  w.kw = {p + mats, mats};
  w.vw = {p + 2 * mats, mats};
  w.ow = {p + 3 * mats, mats};
  w.qb = {p + 4 * mats, static_cast<size_t>(dim)};
  w.kb = {p + 4 * mats + dim, static_cast<size_t>(dim)};
  w.vb = {p + 4 * mats + 2 * dim, static_cast<size_t>(dim)};
  w.ob = {p + 4 * mats + 3 * dim, static_cast<size_t>(dim)};
  // layer norm: gamma 1, beta 0
  for (size_t i = 4 * mats + 4 * dim; i < 4 * mats + 5 * dim; ++i) store[i] = 1.0f;
  for (size_t i = 4 * mats + 5 * dim; i < 4 * mats + 6 * dim; ++i) store[i] = 0.0f;
  w.ln_g = {p + 4 * mats + 4 * dim, static_cast<size_t>(dim)};
  w.ln_b = {p + 4 * mats + 5 * dim, static_cast<size_t>(dim)};
  return w;
}

/// Quadratic-time kernelized attention reference, written independently:
/// out_i = sum_j (phi(q_i).phi(k_j)) v_j / (sum_j phi(q_i).phi(k_j) + delta).
std::vector<float> attention_oracle(const AttentionWeights& w, const std::vector<float>& seq,
                                    int len, int dim, int heads, bool causal) {
  int hd = dim / heads;
  auto phi = [](float u) { return u > 0.0f ? u + 1.0f : std::exp(u); };
  std::vector<float> q(len * dim), k(len * dim), v(len * dim), out = seq;
  for (int i = 0; i < len; ++i)
    for (int o = 0; o < dim; ++o) {
      double aq = w.qb[o], ak = w.kb[o], av = w.vb[o];
      for (int c = 0; c < dim; ++c) {
        aq += w.qw[o * dim + c] * seq[i * dim + c];
        ak += w.kw[o * dim + c] * seq[i * dim + c];
        av += w.vw[o * dim + c] * seq[i * dim + c];
      }
      q[i * dim + o] = phi(static_cast<float>(aq));
      k[i * dim + o] = phi(static_cast<float>(ak));
      v[i * dim + o] = static_cast<float>(av);
    }
  for (int i = 0; i < len; ++i) {
    std::vector<double> attn(dim, 0.0);
    for (int h = 0; h < heads; ++h) {
      int jmax = causal ? i : len - 1;
      double den = 1e-6;
      std::vector<double> num(hd, 0.0);
      for (int j = 0; j <= jmax; ++j) {
        double sim = 0.0;
        for (int a = 0; a < hd; ++a) sim += q[i * dim + h * hd + a] * k[j * dim + h * hd + a];
        den += sim;
        for (int c = 0; c < hd; ++c) num[c] += sim * v[j * dim + h * hd + c];
      }
      for (int c = 0; c < hd; ++c) attn[h * hd + c] = num[c] / den;
    }
    for (int o = 0; o < dim; ++o) {
      double acc = w.ob[o];
      for (int c = 0; c < dim; ++c) acc += w.ow[o * dim + c] * attn[c];
      out[i * dim + o] += static_cast<float>(acc);
    }
    // layer norm, gamma/beta from the weights
    double mean = 0.0;
    for (int c = 0; c < dim; ++c) mean += out[i * dim + c];
    mean /= dim;
    double var = 0.0;
    for (int c = 0; c < dim; ++c) {
      double d = out[i * dim + c] - mean;
      var += d * d;
    }
    var /= dim;
    double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int c = 0; c < dim; ++c)
      out[i * dim + c] =
          static_cast<float>(w.ln_g[c] * (out[i * dim + c] - mean) * inv + w.ln_b[c]);
  }
  return out;
}

}  // namespace

TEST_CASE("input layer") {
  SUBCASE("zero input, zero bias") {
    FeatureMap x(6, 2, 5);
    std::vector<float> w(48 * 6, 0.5f), b(48, 0.0f);
    auto y = input_layer(x, w, b, 48);
    for (auto v : y.data) CHECK(v == 0.0f);
  }
  SUBCASE("identity-padded weight copies the input planes") {
    FeatureMap x(6, 1, 4);
    auto vals = random_vec(x.data.size(), 3);
    x.data = vals;
    std::vector<float> w(8 * 6, 0.0f), b(8, 0.0f);
    for (int i = 0; i < 6; ++i) w[i * 6 + i] = 1.0f;
    auto y = input_layer(x, w, b, 8);
    for (int t = 0; t < 1; ++t)
      for (int f = 0; f < 4; ++f)
        for (int c = 0; c < 6; ++c) CHECK(y.at(c, t, f) == x.at(c, t, f));
  }
  SUBCASE("random weights match the naive oracle") {
    FeatureMap x(6, 3, 7);
    x.data = random_vec(x.data.size(), 5);
    auto w = random_vec(48 * 6, 6), b = random_vec(48, 7);
    auto y = input_layer(x, w, b, 48);
    for (int t = 0; t < 3; ++t)
      for (int f = 0; f < 7; ++f)
        for (int e = 0; e < 48; ++e) {
          double acc = b[e];
          for (int c = 0; c < 6; ++c) acc += w[e * 6 + c] * x.at(c, t, f);
          CHECK(y.at(e, t, f) == doctest::Approx(acc).epsilon(1e-6));
        }
  }
}

TEST_CASE("output layer and mask application") {
  SUBCASE("zero everything is silence") {
    FeatureMap feat(48, 2, 9);
    std::vector<float> w(6 * 48, 0.0f), b(6, 0.0f);
    auto masks = output_layer(feat, w, b, 3);
    for (auto m : masks.data) CHECK(m == cfloat(0, 0));
    TfMap x(3, 2, 9);
    for (auto& v : x.data) v = cfloat(1.0f, -1.0f);
    auto y = apply_masks_and_sum(x, masks);
    for (auto v : y.data) CHECK(v == cfloat(0, 0));
  }
  SUBCASE("random output layer matches the naive oracle") {
    FeatureMap feat(12, 2, 5);
    feat.data = random_vec(feat.data.size(), 11);
    auto w = random_vec(6 * 12, 12), b = random_vec(6, 13);
    auto masks = output_layer(feat, w, b, 3);
    for (int t = 0; t < 2; ++t)
      for (int f = 0; f < 5; ++f)
        for (int c = 0; c < 3; ++c) {
          double re = b[c], im = b[3 + c];
          for (int e = 0; e < 12; ++e) {
            re += w[c * 12 + e] * feat.at(e, t, f);
            im += w[(3 + c) * 12 + e] * feat.at(e, t, f);
          }
          CHECK(masks.at(c, t, f).real() == doctest::Approx(re).epsilon(1e-6));
          CHECK(masks.at(c, t, f).imag() == doctest::Approx(im).epsilon(1e-6));
        }
  }
  SUBCASE("delta mask selects one signal") {
    TfMap x(3, 2, 4), m(3, 2, 4);
    std::mt19937 g(17);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (auto& v : x.data) v = cfloat(dist(g), dist(g));
    for (int t = 0; t < 2; ++t)
      for (int f = 0; f < 4; ++f) m.at(2, t, f) = cfloat(1.0f, 0.0f);
    auto y = apply_masks_and_sum(x, m);
    for (int t = 0; t < 2; ++t)
      for (int f = 0; f < 4; ++f) CHECK(y.at(0, t, f) == x.at(2, t, f));
  }
  SUBCASE("complex multiply-accumulate matches the scalar oracle; bilinear") {
    TfMap x(3, 2, 6), m(3, 2, 6);
    std::mt19937 g(19);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (auto& v : x.data) v = cfloat(dist(g), dist(g));
    for (auto& v : m.data) v = cfloat(dist(g), dist(g));
    auto y = apply_masks_and_sum(x, m);
    for (int t = 0; t < 2; ++t)
      for (int f = 0; f < 6; ++f) {
        double re = 0, im = 0;
        for (int c = 0; c < 3; ++c) {
          auto mc = m.at(c, t, f);
          auto xc = x.at(c, t, f);
          re += mc.real() * xc.real() - mc.imag() * xc.imag();
          im += mc.real() * xc.imag() + mc.imag() * xc.real();
        }
        CHECK(y.at(0, t, f).real() == doctest::Approx(re).epsilon(1e-5));
        CHECK(y.at(0, t, f).imag() == doctest::Approx(im).epsilon(1e-5));
      }
    // bilinearity in the mask argument
    TfMap m2 = m;
    for (auto& v : m2.data) v *= 2.0f;
    auto y2 = apply_masks_and_sum(x, m2);
    for (size_t i = 0; i < y.data.size(); ++i)
      CHECK(std::abs(y2.data[i] - 2.0f * y.data[i]) <= 1e-5f);
  }
}

TEST_CASE("linear attention equals the quadratic oracle up to L = 16") {
  std::vector<float> store;
  auto w = make_attn(store, 16, 101);
  std::vector<float> scratch;
  for (bool causal : {true, false}) {
    for (int len : {1, 2, 5, 8, 16}) {
      auto seq = random_vec(static_cast<size_t>(len) * 16, 200 + len);
      auto expect = attention_oracle(w, seq, len, 16, 4, causal);
      auto got = seq;
      attention_sublayer(w, got.data(), len, 16, 4, causal, scratch);
      for (size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("single-element attention reduces to the projected value path") {
  std::vector<float> store;
  auto w = make_attn(store, 8, 55);
  auto seq = random_vec(8, 7);
  // expected: LN(x + O(v) + ob) with attention weight ~ 1 (denominator floor only)
  std::vector<float> v(8);
  for (int o = 0; o < 8; ++o) {
    double acc = w.vb[o];
    for (int c = 0; c < 8; ++c) acc += w.vw[o * 8 + c] * seq[c];
    v[o] = static_cast<float>(acc);
  }
  auto got = seq;
  std::vector<float> scratch;
  attention_sublayer(w, got.data(), 1, 8, 2, true, scratch);
  // compare against explicit computation with attn == v
  std::vector<float> expect = seq;
  for (int o = 0; o < 8; ++o) {
    double acc = w.ob[o];
    for (int c = 0; c < 8; ++c) acc += w.ow[o * 8 + c] * v[c];
    expect[o] += static_cast<float>(acc);
  }
  float mean = 0.0f;
  for (float x : expect) mean += x;
  mean /= 8;
  float var = 0.0f;
  for (float x : expect) var += (x - mean) * (x - mean);
  var /= 8;
  for (int c = 0; c < 8; ++c) {
    float ln = (expect[c] - mean) / std::sqrt(var + 1e-5f);
    CHECK(got[c] == doctest::Approx(ln).epsilon(1e-3));
  }
}

TEST_CASE("causal attention ignores future edits") {
  std::vector<float> store;
  auto w = make_attn(store, 12, 77);
  int len = 10;
  auto a = random_vec(static_cast<size_t>(len) * 12, 31);
  auto b = a;
  for (int c = 0; c < 12; ++c) b[(len - 1) * 12 + c] += 2.0f;
  std::vector<float> scratch;
  auto ra = a, rb = b;
  attention_sublayer(w, ra.data(), len, 12, 4, true, scratch);
  attention_sublayer(w, rb.data(), len, 12, 4, true, scratch);
  for (int i = 0; i < (len - 1) * 12; ++i) CHECK(ra[i] == rb[i]);
}

TEST_CASE("streaming time attention equals the batch causal form") {
  std::vector<float> store;
  auto w = make_attn(store, 16, 88);
  int len = 24;
  auto seq = random_vec(static_cast<size_t>(len) * 16, 41);
  auto batch = seq;
  std::vector<float> scratch;
  attention_sublayer(w, batch.data(), len, 16, 4, true, scratch);
  TimeAttention stepper(w, /*bands=*/1, 16, 4);
  for (int t = 0; t < len; ++t) {
    float* frame = seq.data() + static_cast<size_t>(t) * 16;
    stepper.step(frame);
    for (int c = 0; c < 16; ++c) CHECK(frame[c] == batch[t * 16 + c]);
  }
}

TEST_CASE("causal conv: receptive field and causality") {
  int bands = 9, E = 4, G = 3;
  auto w1 = random_vec(static_cast<size_t>(G) * E * 9, 61, 0.5f);
  auto w2 = random_vec(static_cast<size_t>(E) * G * 9, 62, 0.5f);
  std::vector<float> b1(G, 0.0f), b2(E, 0.0f);
  std::vector<float> g1(G, 1.0f), z1(G, 0.0f), s1(G, 1.0f);  // slope 1: linear PReLU
  std::vector<float> g2(E, 1.0f), z2(E, 0.0f), s2(E, 1.0f);

  SUBCASE("zero input, zero bias stays zero") {
    CausalConv c1(w1, b1, g1, z1, s1, bands, E, G), c2(w2, b2, g2, z2, s2, bands, G, E);
    std::vector<float> in(static_cast<size_t>(bands) * E, 0.0f), mid(bands * G), out(bands * E);
    for (int t = 0; t < 4; ++t) {
      c1.step(in.data(), mid.data());
      c2.step(mid.data(), out.data());
      for (auto v : out) CHECK(v == 0.0f);
    }
  }
  SUBCASE("impulse support: two past time taps, two-bin frequency radius") {
    CausalConv c1(w1, b1, g1, z1, s1, bands, E, G), c2(w2, b2, g2, z2, s2, bands, G, E);
    std::vector<float> in(static_cast<size_t>(bands) * E, 0.0f), mid(bands * G), out(bands * E);
    int b0 = 4;
    for (int t = 0; t < 8; ++t) {
      std::fill(in.begin(), in.end(), 0.0f);
      if (t == 2) in[static_cast<size_t>(b0) * E] = 1.0f;  // impulse at (t=2, band 4, ch 0)
      c1.step(in.data(), mid.data());
      c2.step(mid.data(), out.data());
      for (int b = 0; b < bands; ++b) {
        float mag = 0.0f;
        for (int e = 0; e < E; ++e) mag = std::max(mag, std::abs(out[b * E + e]));
        bool in_time = t >= 2 && t <= 6;   // current + 4 past taps after two layers
        bool in_freq = std::abs(b - b0) <= 2;
        if (!(in_time && in_freq)) CHECK(mag == 0.0f);
        if (t == 2 && b == b0) CHECK(mag > 0.0f);
      }
    }
  }
  SUBCASE("future frames cannot change past outputs") {
    CausalConv ca(w1, b1, g1, z1, s1, bands, E, G), cb(w1, b1, g1, z1, s1, bands, E, G);
    std::vector<float> outa(bands * G), outb(bands * G);
    std::mt19937 g(7);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (int t = 0; t < 6; ++t) {
      std::vector<float> in(static_cast<size_t>(bands) * E);
      for (auto& v : in) v = dist(g);
      auto in2 = in;
      if (t >= 4)
        for (auto& v : in2) v += 3.0f;  // diverge only from frame 4 on
      ca.step(in.data(), outa.data());
      cb.step(in2.data(), outb.data());
      if (t < 4)
        for (size_t i = 0; i < outa.size(); ++i) CHECK(outa[i] == outb[i]);
    }
  }
}

TEST_CASE("block-level time causality with GRU and both attentions") {
  // bands=3, dim=8: run the full block path frame by frame on two inputs
  // that diverge from frame 5; everything before must match bitwise.
  int bands = 3, dim = 8, heads = 2;
  std::vector<float> sf, st;
  auto wf = make_attn(sf, dim, 301);
  auto wt = make_attn(st, dim, 302);
  auto gw_store = random_vec(2 * 3 * dim * dim + 2 * 3 * dim, 303, 0.3f);
  GruWeights gw{{gw_store.data(), static_cast<size_t>(3 * dim * dim)},
                {gw_store.data() + 3 * dim * dim, static_cast<size_t>(3 * dim * dim)},
                {gw_store.data() + 6 * dim * dim, static_cast<size_t>(3 * dim)},
                {gw_store.data() + 6 * dim * dim + 3 * dim, static_cast<size_t>(3 * dim)}};
  std::vector<float> ln_g(dim, 1.0f), ln_b(dim, 0.0f);

  auto run = [&](const std::vector<std::vector<float>>& frames) {
    GruSublayer gru(gw, ln_g, ln_b, bands, dim);
    TimeAttention ta(wt, bands, dim, heads);
    std::vector<float> scratch;
    std::vector<std::vector<float>> outs;
    for (auto frame : frames) {
      attention_sublayer(wf, frame.data(), bands, dim, heads, false, scratch);
      gru.step(frame.data());
      ta.step(frame.data());
      outs.push_back(frame);
    }
    return outs;
  };

  std::vector<std::vector<float>> a, b;
  std::mt19937 g(9);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (int t = 0; t < 8; ++t) {
    std::vector<float> fr(static_cast<size_t>(bands) * dim);
    for (auto& v : fr) v = dist(g);
    a.push_back(fr);
    if (t >= 5)
      for (auto& v : fr) v -= 0.7f;
    b.push_back(fr);
  }
  auto ra = run(a), rb = run(b);
  for (int t = 0; t < 5; ++t) CHECK(ra[t] == rb[t]);
  // zero input with zero biases stays zero through every sublayer
  std::vector<std::vector<float>> zeros(4, std::vector<float>(bands * dim, 0.0f));
  std::vector<float> sfz, stz;
  auto wfz = make_attn(sfz, dim, 304);
  auto wtz = make_attn(stz, dim, 305);
  for (auto* store : {&sfz, &stz}) {
    // zero all biases (mats stay random), keep gamma=1 beta=0
    size_t mats = static_cast<size_t>(dim) * dim * 4;
    for (size_t i = mats; i < mats + 4 * dim; ++i) (*store)[i] = 0.0f;
  }
  std::vector<float> gz(gw_store.size(), 0.0f);
  GruWeights gwz{{gz.data(), static_cast<size_t>(3 * dim * dim)},
                 {gz.data() + 3 * dim * dim, static_cast<size_t>(3 * dim * dim)},
                 {gz.data() + 6 * dim * dim, static_cast<size_t>(3 * dim)},
                 {gz.data() + 6 * dim * dim + 3 * dim, static_cast<size_t>(3 * dim)}};
  GruSublayer gruz(gwz, ln_g, ln_b, bands, dim);
  TimeAttention taz(wtz, bands, dim, heads);
  std::vector<float> scratch;
  for (auto frame : zeros) {
    attention_sublayer(wfz, frame.data(), bands, dim, heads, false, scratch);
    gruz.step(frame.data());
    taz.step(frame.data());
    for (auto v : frame) CHECK(v == 0.0f);
  }
}

TEST_CASE("engine: silence in, silence out for any weights") {
  for (const char* preset : {"uncompressed", "dualpath-2x2"}) {
    RunConfig cfg = preset_run_config(preset);
    auto w = testutil::random_weights(cfg.model, 5);
    std::vector<float> silence(16000, 0.0f);
    auto out = enhance(cfg, w, silence, silence);
    REQUIRE(out.size() == silence.size());
    for (float v : out) CHECK(v == 0.0f);
  }
}

TEST_CASE("engine: identity-mask weights reproduce the linear-AEC residual") {
  RunConfig cfg = preset_run_config("uncompressed");
  auto w = testutil::identity_weights(cfg.model);
  size_t n = 2 * 16000;
  auto mic = testutil::white_noise(n, 51);
  auto ref = testutil::white_noise(n, 52);
  auto out = enhance(cfg, w, mic, ref);
  auto e_ref = aec_process(mic, ref, cfg.aec, cfg.stft);
  REQUIRE(out.size() == e_ref.size());
  size_t guard = cfg.stft.window_len;
  CHECK(testutil::snr_db(e_ref, out, guard, n - guard) >= 60.0);
}

TEST_CASE("engine: chunked and whole-file execution produce identical samples") {
  for (const char* preset : {"dualpath-2x2", "skippred-4-postnet"}) {
    RunConfig cfg = preset_run_config(preset);
    auto w = testutil::random_weights(cfg.model, 6);
    size_t n = 16000;
    auto mic = testutil::white_noise(n, 61);
    auto ref = testutil::white_noise(n, 62);
    auto offline = enhance(cfg, w, mic, ref, 0);
    auto stream = enhance(cfg, w, mic, ref, 160);
    auto ragged = enhance(cfg, w, mic, ref, 331);
    REQUIRE(offline.size() == stream.size());
    CHECK(offline == stream);
    CHECK(offline == ragged);
  }
}

TEST_CASE("engine: end-to-end causality within the window guard") {
  for (const char* preset : {"uncompressed", "dualpath-2x4"}) {
    RunConfig cfg = preset_run_config(preset);
    auto w = testutil::random_weights(cfg.model, 8);
    size_t n = 12000;
    auto mic = testutil::white_noise(n, 71);
    auto ref = testutil::white_noise(n, 72);
    auto base = enhance(cfg, w, mic, ref);
    size_t p = 6400;  // perturb mic and ref from here on
    auto mic2 = mic;
    auto ref2 = ref;
    for (size_t i = p; i < n; ++i) {
      mic2[i] = -mic2[i] + 0.1f;
      ref2[i] *= 2.0f;
    }
    auto mod = enhance(cfg, w, mic2, ref2);
    for (size_t i = 0; i + cfg.stft.window_len < p; ++i) CHECK(base[i] == mod[i]);
  }
}

TEST_CASE("engine: output length tracks the microphone input") {
  RunConfig cfg = preset_run_config("uncompressed");
  auto w = testutil::random_weights(cfg.model, 9);
  auto mic = testutil::white_noise(5000, 81);
  auto ref = testutil::white_noise(6000, 82);
  CHECK(enhance(cfg, w, mic, ref).size() == 5000);
  std::vector<float> empty;
  CHECK_THROWS_AS(enhance(cfg, w, empty, ref), std::invalid_argument);
}
