// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <random>

#include "sslasr/common.hpp"

namespace sslasr {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

constexpr double kLogFloor = 1e-10;

// DFT basis for one frame length, shared across calls.
struct DftPlan {
  int n_fft;
  int n_bins;
  RowMat cos_t;  // n_fft x n_bins, transposed basis for frames * basis
  RowMat sin_t;
  std::vector<double> window;  // periodic Hann

  explicit DftPlan(int n) : n_fft(n), n_bins(n / 2 + 1) {
    cos_t.resize(n_fft, n_bins);
    sin_t.resize(n_fft, n_bins);
    const double w = 2.0 * M_PI / n_fft;
    for (int t = 0; t < n_fft; ++t) {
      for (int k = 0; k < n_bins; ++k) {
        cos_t(t, k) = std::cos(w * k * t);
        sin_t(t, k) = std::sin(w * k * t);
      }
    }
    window.resize(n_fft);
    for (int t = 0; t < n_fft; ++t)
      window[t] = 0.5 - 0.5 * std::cos(2.0 * M_PI * t / n_fft);
  }
};

const DftPlan& dft_plan(int n_fft) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<DftPlan>> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto it = plans.find(n_fft);
  if (it == plans.end())
    it = plans.emplace(n_fft, std::make_unique<DftPlan>(n_fft)).first;
  return *it->second;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

}  // namespace

void FeatureConfig::validate(int sample_rate) const {
  if (hop <= 0 || hop > n_fft)
    throw ConfigError("features: need 0 < hop <= n_fft");
  if (fmin < 0 || fmin >= fmax || fmax > sample_rate / 2.0)
    throw ConfigError("features: need 0 <= fmin < fmax <= sample_rate/2");
  if (n_mels < 1) throw ConfigError("features: n_mels must be positive");
  if (n_mfcc < 1 || n_mfcc > n_mels)
    throw ConfigError("features: need 1 <= n_mfcc <= n_mels");
  if (n_mels > n_fft / 2 + 1)
    throw ConfigError("features: n_mels too large for n_fft");
}

std::string feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::fbank: return "fbank";
    case FeatureKind::mfcc: return "mfcc";
    case FeatureKind::latent: return "latent";
  }
  return "?";
}

FeatureKind feature_kind_from_name(const std::string& name) {
  if (name == "fbank") return FeatureKind::fbank;
  if (name == "mfcc") return FeatureKind::mfcc;
  if (name == "latent") return FeatureKind::latent;
  throw ConfigError("features: unknown kind " + name);
}

Matrix power_spectrogram(const AudioBuffer& buf, const FeatureConfig& cfg) {
  cfg.validate(buf.sample_rate);
  const int T = frame_count(buf.samples.size(), cfg);
  if (T == 0)
    throw DataError("features: buffer shorter than one analysis frame");
  const DftPlan& plan = dft_plan(cfg.n_fft);

  RowMat frames(T, cfg.n_fft);
  if (cfg.dither > 0) {
    std::mt19937_64 rng(derive_seed(buf.samples.size(), "dither"));
    std::normal_distribution<double> g(0.0, cfg.dither);
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < cfg.n_fft; ++i)
        frames(t, i) =
            (buf.samples[static_cast<size_t>(t) * cfg.hop + i] + g(rng)) *
            plan.window[i];
  } else {
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < cfg.n_fft; ++i)
        frames(t, i) =
            buf.samples[static_cast<size_t>(t) * cfg.hop + i] * plan.window[i];
  }

  RowMat re = frames * plan.cos_t;
  RowMat im = frames * plan.sin_t;

  Matrix out(T, plan.n_bins);
  MapMat(out.v.data(), T, plan.n_bins) =
      re.array().square() + im.array().square();
  return out;
}

Matrix mel_filterbank(const FeatureConfig& cfg, int sample_rate) {
  cfg.validate(sample_rate);
  const int n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    centers[i] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

  Matrix fb(cfg.n_mels, n_bins);
  const double bin_hz = static_cast<double>(sample_rate) / cfg.n_fft;
  for (int m = 0; m < cfg.n_mels; ++m) {
    double left = centers[m], mid = centers[m + 1], right = centers[m + 2];
    double row_sum = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      double f = k * bin_hz;
      double w = 0.0;
      if (f > left && f < mid)
        w = (f - left) / (mid - left);
      else if (f >= mid && f < right)
        w = (right - f) / (right - mid);
      fb.at(m, k) = w;
      row_sum += w;
    }
    if (row_sum == 0.0) {
      // triangle narrower than the bin spacing: snap to the nearest bin so
      // no mel channel is dead
      int k = std::clamp(static_cast<int>(std::lround(mid / bin_hz)), 0,
                         n_bins - 1);
      fb.at(m, k) = 1.0;
    }
  }
  return fb;
}

FeatureMatrix fbank(const AudioBuffer& buf, const FeatureConfig& cfg) {
  Matrix power = power_spectrogram(buf, cfg);
  Matrix mel = mel_filterbank(cfg, buf.sample_rate);

  FeatureMatrix out;
  out.kind = FeatureKind::fbank;
  out.frame_rate = static_cast<double>(buf.sample_rate) / cfg.hop;
  out.m = Matrix(power.rows, cfg.n_mels);

  ConstMapMat p(power.v.data(), power.rows, power.cols);
  ConstMapMat f(mel.v.data(), mel.rows, mel.cols);
  MapMat o(out.m.v.data(), out.m.rows, out.m.cols);
  o = ((p * f.transpose()).array() + kLogFloor).log();
  return out;
}

FeatureMatrix mfcc(const FeatureMatrix& fb, int n_mfcc) {
  if (fb.kind != FeatureKind::fbank)
    throw DataError("mfcc: input must be fbank features");
  const int D = fb.dim();
  if (n_mfcc < 1 || n_mfcc > D)
    throw ConfigError("mfcc: need 1 <= n_mfcc <= n_mels");

  // Orthonormal DCT-II basis, n_mfcc x D.
  RowMat dct(n_mfcc, D);
  for (int k = 0; k < n_mfcc; ++k) {
    double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / D);
    for (int n = 0; n < D; ++n)
      dct(k, n) = scale * std::cos(M_PI * (n + 0.5) * k / D);
  }

  FeatureMatrix out;
  out.kind = FeatureKind::mfcc;
  out.frame_rate = fb.frame_rate;
  out.m = Matrix(fb.frames(), n_mfcc);
  ConstMapMat x(fb.m.v.data(), fb.m.rows, fb.m.cols);
  MapMat o(out.m.v.data(), out.m.rows, out.m.cols);
  o = x * dct.transpose();
  return out;
}

FeatureMatrix cmvn(const FeatureMatrix& f) {
  const int T = f.frames(), D = f.dim();
  if (T < 2) throw DataError("cmvn: need at least 2 frames");
  FeatureMatrix out = f;
  for (int d = 0; d < D; ++d) {
    double mean = 0;
    for (int t = 0; t < T; ++t) mean += f.m.at(t, d);
    mean /= T;
    double var = 0;
    for (int t = 0; t < T; ++t) {
      double c = f.m.at(t, d) - mean;
      var += c * c;
    }
    var = std::max(var / T, 1e-8);
    double inv = 1.0 / std::sqrt(var);
    for (int t = 0; t < T; ++t) out.m.at(t, d) = (f.m.at(t, d) - mean) * inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature cache file
// ---------------------------------------------------------------------------

namespace {

constexpr char kCacheMagic[8] = {'S', 'S', 'L', 'F', 'E', 'A', 'T', '1'};
constexpr uint8_t kCacheVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

FeatureCacheWriter::FeatureCacheWriter(const std::string& path, bool append)
    : path_(path) {
  std::ifstream in(path, std::ios::binary);
  if (in && append) {
    char magic[8];
    in.read(magic, 8);
    if (in && std::memcmp(magic, kCacheMagic, 8) == 0) {
      get<uint8_t>(in);
      while (in) {
        auto id_len = get<uint32_t>(in);
        if (!in) break;
        std::string id(id_len, '\0');
        in.read(id.data(), id_len);
        auto T = get<uint32_t>(in);
        auto D = get<uint32_t>(in);
        get<float>(in);
        get<uint8_t>(in);
        in.seekg(static_cast<std::streamoff>(T) * D * 4, std::ios::cur);
        if (in) existing_[id] = true;
      }
    }
  }
  if (existing_.empty()) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(kCacheMagic, 8);
    put(out, kCacheVersion);
    if (!out) throw DataError("feature cache: cannot write " + path);
  }
}

void FeatureCacheWriter::add(const std::string& id, const FeatureMatrix& f) {
  if (has(id)) return;
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  put(out, static_cast<uint32_t>(id.size()));
  out.write(id.data(), static_cast<std::streamsize>(id.size()));
  put(out, static_cast<uint32_t>(f.frames()));
  put(out, static_cast<uint32_t>(f.dim()));
  put(out, static_cast<float>(f.frame_rate));
  put(out, static_cast<uint8_t>(f.kind));
  for (double x : f.m.v) put(out, static_cast<float>(x));
  if (!out) throw DataError("feature cache: write failed for " + path_);
  existing_[id] = true;
}

std::map<std::string, FeatureMatrix> load_feature_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("feature cache: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCacheMagic, 8) != 0)
    throw FormatError("feature cache: bad magic in " + path);
  auto version = get<uint8_t>(in);
  if (version != kCacheVersion)
    throw FormatError("feature cache: unsupported version in " + path);

  std::map<std::string, FeatureMatrix> out;
  while (in) {
    auto id_len = get<uint32_t>(in);
    if (!in) break;
    std::string id(id_len, '\0');
    in.read(id.data(), id_len);
    auto T = get<uint32_t>(in);
    auto D = get<uint32_t>(in);
    auto rate = get<float>(in);
    auto kind = get<uint8_t>(in);
    if (!in) throw FormatError("feature cache: truncated record in " + path);
    FeatureMatrix f;
    f.frame_rate = rate;
    f.kind = static_cast<FeatureKind>(kind);
    f.m = Matrix(static_cast<int>(T), static_cast<int>(D));
    for (auto& x : f.m.v) x = get<float>(in);
    if (!in) throw FormatError("feature cache: truncated payload in " + path);
    out[id] = std::move(f);
  }
  return out;
}

}  // namespace sslasr
