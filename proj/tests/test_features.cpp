// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "sslasr/audio.hpp"
#include "sslasr/common.hpp"
#include "sslasr/features.hpp"
#include "test_util.hpp"

using namespace sslasr;

namespace {

AudioBuffer random_audio(int n, uint64_t seed, float amp = 0.5f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-amp, amp);
  AudioBuffer buf;
  buf.samples.resize(n);
  for (auto& s : buf.samples) s = dist(rng);
  return buf;
}

// independent oracle: direct O(N^2) DFT of one windowed frame
std::vector<double> naive_frame_power(const AudioBuffer& buf, int t,
                                      const FeatureConfig& cfg) {
  int N = cfg.n_fft;
  std::vector<double> windowed(N);
  for (int i = 0; i < N; ++i) {
    double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / N);
    windowed[i] = buf.samples[static_cast<size_t>(t) * cfg.hop + i] * w;
  }
  std::vector<double> power(N / 2 + 1);
  for (int k = 0; k <= N / 2; ++k) {
    double re = 0, im = 0;
    for (int i = 0; i < N; ++i) {
      re += windowed[i] * std::cos(2.0 * M_PI * k * i / N);
      im -= windowed[i] * std::sin(2.0 * M_PI * k * i / N);
    }
    power[k] = re * re + im * im;
  }
  return power;
}

}  // namespace

TEST_CASE("frame count formula holds for all buffer lengths") {
  FeatureConfig cfg;
  for (size_t n : {400u, 401u, 559u, 560u, 561u, 4000u, 16000u}) {
    AudioBuffer buf = random_audio(static_cast<int>(n), n);
    Matrix p = power_spectrogram(buf, cfg);
    CHECK(p.rows == 1 + static_cast<int>((n - 400) / 160));
    CHECK(p.cols == 201);
  }
  AudioBuffer tiny = random_audio(399, 1);
  CHECK_THROWS_AS(power_spectrogram(tiny, cfg), DataError);
}

TEST_CASE("silence yields a zero spectrogram and log-floor fbank") {
  FeatureConfig cfg;
  AudioBuffer buf;
  buf.samples.assign(16000, 0.0f);
  Matrix p = power_spectrogram(buf, cfg);
  for (double v : p.v) CHECK(v == 0.0);
  FeatureMatrix fb = fbank(buf, cfg);
  for (double v : fb.m.v) CHECK(v == doctest::Approx(std::log(1e-10)));
}

TEST_CASE("power spectrogram matches the direct DFT oracle") {
  FeatureConfig cfg;
  AudioBuffer buf = random_audio(1200, 42);
  Matrix p = power_spectrogram(buf, cfg);
  for (int t : {0, 3}) {
    auto oracle = naive_frame_power(buf, t, cfg);
    for (int k = 0; k <= 200; ++k)
      CHECK(p.at(t, k) ==
            doctest::Approx(oracle[k]).epsilon(1e-9).scale(1e-12));
  }
}

TEST_CASE("bin-center sine concentrates energy at its bin") {
  // With the periodic Hann window the energy of a bin-center sine spreads
  // over k0 and its two neighbours (derived from the window's DFT, which
  // has weight only at offsets -1, 0, +1); k0 itself is the argmax.
  FeatureConfig cfg;
  const int k0 = 50;  // 2000 Hz at 16 kHz / 400
  AudioBuffer buf;
  buf.samples.resize(4000);
  for (size_t i = 0; i < buf.samples.size(); ++i)
    buf.samples[i] =
        0.5f * static_cast<float>(std::sin(2.0 * M_PI * k0 * 40.0 * i / 16000.0));
  Matrix p = power_spectrogram(buf, cfg);
  for (int t = 0; t < p.rows; ++t) {
    double total = 0, near = 0;
    int argmax = 0;
    for (int k = 0; k <= 200; ++k) {
      total += p.at(t, k);
      if (std::abs(k - k0) <= 1) near += p.at(t, k);
      if (p.at(t, k) > p.at(t, argmax)) argmax = k;
    }
    CHECK(argmax == k0);
    CHECK(near / total >= 0.99);
  }
}

TEST_CASE("Parseval: one-sided power sum equals windowed time-domain energy") {
  FeatureConfig cfg;
  AudioBuffer buf = random_audio(2000, 9);
  Matrix p = power_spectrogram(buf, cfg);
  const int N = cfg.n_fft;
  for (int t = 0; t < p.rows; ++t) {
    double freq_sum = 0;
    for (int k = 0; k <= N / 2; ++k) {
      double w = (k == 0 || k == N / 2) ? 1.0 : 2.0;
      freq_sum += w * p.at(t, k);
    }
    double time_sum = 0;
    for (int i = 0; i < N; ++i) {
      double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / N);
      double x = buf.samples[static_cast<size_t>(t) * cfg.hop + i] * w;
      time_sum += x * x;
    }
    CHECK(freq_sum == doctest::Approx(N * time_sum).epsilon(1e-6));
  }
}

TEST_CASE("time shift by one hop shifts spectrogram rows") {
  FeatureConfig cfg;
  AudioBuffer buf = random_audio(2000, 13);
  AudioBuffer shifted;
  shifted.sample_rate = buf.sample_rate;
  shifted.samples.assign(buf.samples.begin() + cfg.hop, buf.samples.end());
  Matrix a = power_spectrogram(buf, cfg);
  Matrix b = power_spectrogram(shifted, cfg);
  for (int t = 0; t < b.rows; ++t)
    for (int k = 0; k <= 200; ++k)
      CHECK(b.at(t, k) == doctest::Approx(a.at(t + 1, k)).epsilon(1e-12));
}

TEST_CASE("mel filterbank shape and structure") {
  FeatureConfig cfg;
  Matrix fb = mel_filterbank(cfg, 16000);
  CHECK(fb.rows == 80);
  CHECK(fb.cols == 201);
  // Filter centers increase strictly on the mel grid; after sampling onto
  // 40 Hz bins the argmax is non-decreasing (narrow low filters may share
  // a bin) and strictly increasing once triangles span multiple bins.
  int prev_peak = -1;
  int distinct = 0;
  for (int m = 0; m < 80; ++m) {
    int peak = 0;
    bool rising = true;
    double row_sum = 0;
    for (int k = 0; k < 201; ++k) {
      CHECK(fb.at(m, k) >= 0.0);
      row_sum += fb.at(m, k);
      if (fb.at(m, k) > fb.at(m, peak)) peak = k;
    }
    CHECK(row_sum > 0.0);  // no dead mel channel
    // unimodal: non-decreasing then non-increasing around the peak
    for (int k = 1; k < 201; ++k) {
      if (fb.at(m, k) < fb.at(m, k - 1)) rising = false;
      if (!rising) CHECK(fb.at(m, k) <= fb.at(m, k - 1) + 1e-12);
    }
    CHECK(peak >= prev_peak);
    if (m >= 40) CHECK(peak > prev_peak);
    if (peak != prev_peak) ++distinct;
    prev_peak = peak;
  }
  CHECK(distinct >= 60);
  // every bin within [fmin, fmax] is covered by some filter
  for (int k = 0; k < 201; ++k) {
    double f = k * 40.0;
    if (f <= cfg.fmin || f >= cfg.fmax) continue;
    double colsum = 0;
    for (int m = 0; m < 80; ++m) colsum += fb.at(m, k);
    CHECK(colsum > 0.0);
  }
  FeatureConfig bad;
  bad.n_fft = 32;
  bad.n_mels = 80;
  CHECK_THROWS_AS(mel_filterbank(bad, 16000), ConfigError);
}

TEST_CASE("fbank defaults: 80 dims at 100 Hz") {
  FeatureConfig cfg;
  AudioBuffer buf = random_audio(16000, 3);
  FeatureMatrix fb = fbank(buf, cfg);
  CHECK(fb.dim() == 80);
  CHECK(fb.frame_rate == doctest::Approx(100.0));
  CHECK(fb.kind == FeatureKind::fbank);
}

TEST_CASE("doubling the signal shifts fbank by log 4 above the floor") {
  FeatureConfig cfg;
  AudioBuffer buf = random_audio(2000, 21, 0.4f);
  AudioBuffer doubled = buf;
  for (auto& s : doubled.samples) s *= 2.0f;
  FeatureMatrix a = fbank(buf, cfg);
  FeatureMatrix b = fbank(doubled, cfg);
  for (size_t i = 0; i < a.m.v.size(); ++i) {
    if (a.m.v[i] > std::log(1e-10) + 8.0)  // comfortably above the floor
      CHECK(b.m.v[i] - a.m.v[i] == doctest::Approx(std::log(4.0)).epsilon(1e-5));
  }
}

TEST_CASE("mfcc of a constant frame is (c*sqrt(D), 0, ..., 0)") {
  FeatureMatrix fb;
  fb.kind = FeatureKind::fbank;
  fb.frame_rate = 100;
  fb.m = Matrix(1, 80);
  const double c = 0.7;
  for (auto& v : fb.m.v) v = c;
  FeatureMatrix out = mfcc(fb, 13);
  CHECK(out.m.at(0, 0) == doctest::Approx(c * std::sqrt(80.0)).epsilon(1e-9));
  for (int k = 1; k < 13; ++k)
    CHECK(out.m.at(0, k) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
}

TEST_CASE("full-coefficient DCT round trip reconstructs the frame") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-2, 2);
  FeatureMatrix fb;
  fb.kind = FeatureKind::fbank;
  fb.frame_rate = 100;
  fb.m = Matrix(3, 16);
  for (auto& v : fb.m.v) v = dist(rng);
  FeatureMatrix co = mfcc(fb, 16);
  // reconstruct with the transposed orthonormal basis
  for (int t = 0; t < 3; ++t) {
    for (int n = 0; n < 16; ++n) {
      double x = 0;
      for (int k = 0; k < 16; ++k) {
        double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / 16);
        x += co.m.at(t, k) * scale * std::cos(M_PI * (n + 0.5) * k / 16);
      }
      CHECK(x == doctest::Approx(fb.m.at(t, n)).epsilon(1e-9));
    }
  }
}

TEST_CASE("mfcc matches the naive DCT sum oracle") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> dist(-3, 3);
  FeatureMatrix fb;
  fb.kind = FeatureKind::fbank;
  fb.frame_rate = 100;
  fb.m = Matrix(2, 80);
  for (auto& v : fb.m.v) v = dist(rng);
  FeatureMatrix out = mfcc(fb, 13);
  for (int t = 0; t < 2; ++t)
    for (int k = 0; k < 13; ++k) {
      double acc = 0;
      for (int n = 0; n < 80; ++n)
        acc += fb.m.at(t, n) * std::cos(M_PI * (n + 0.5) * k / 80);
      acc *= std::sqrt((k == 0 ? 1.0 : 2.0) / 80);
      CHECK(out.m.at(t, k) == doctest::Approx(acc).epsilon(1e-9));
    }
  CHECK_THROWS_AS(mfcc(out, 13), DataError);   // wrong kind
  CHECK_THROWS_AS(mfcc(fb, 81), ConfigError);  // too many coefficients
}

TEST_CASE("cmvn normalizes, is idempotent, and floors constant dimensions") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> dist(-5, 5);
  FeatureMatrix f;
  f.kind = FeatureKind::fbank;
  f.frame_rate = 100;
  f.m = Matrix(50, 8);
  for (auto& v : f.m.v) v = dist(rng);
  for (int t = 0; t < 50; ++t) f.m.at(t, 3) = 2.5;  // constant dim

  FeatureMatrix n = cmvn(f);
  for (int d = 0; d < 8; ++d) {
    double mean = 0;
    for (int t = 0; t < 50; ++t) mean += n.m.at(t, d);
    CHECK(std::fabs(mean / 50) < 1e-9);
  }
  for (int t = 0; t < 50; ++t) CHECK(n.m.at(t, 3) == 0.0);

  FeatureMatrix again = cmvn(n);
  for (size_t i = 0; i < n.m.v.size(); ++i)
    CHECK(again.m.v[i] == doctest::Approx(n.m.v[i]).epsilon(1e-9).scale(1.0));

  FeatureMatrix one;
  one.m = Matrix(1, 4);
  CHECK_THROWS_AS(cmvn(one), DataError);
}

TEST_CASE("feature cache: round trip and resumability") {
  sslasr::testing::TempDir tmp("featcache");
  FeatureConfig cfg;
  AudioBuffer buf = random_audio(1200, 33);
  FeatureMatrix f = fbank(buf, cfg);
  {
    FeatureCacheWriter w(tmp.file("cache.bin"));
    w.add("utt1", f);
    w.add("utt1", f);  // duplicate add is a no-op
  }
  {
    FeatureCacheWriter w(tmp.file("cache.bin"));  // reopen
    CHECK(w.has("utt1"));
    w.add("utt2", f);
  }
  auto cache = load_feature_cache(tmp.file("cache.bin"));
  REQUIRE(cache.size() == 2);
  CHECK(cache["utt1"].frames() == f.frames());
  CHECK(cache["utt1"].dim() == 80);
  CHECK(cache["utt1"].frame_rate == doctest::Approx(100.0));
  for (size_t i = 0; i < f.m.v.size(); ++i)
    CHECK(cache["utt1"].m.v[i] ==
          doctest::Approx(f.m.v[i]).epsilon(1e-6));  // f32 wire precision
}
