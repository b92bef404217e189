// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_FEATURES_HPP
#define SSLASR_FEATURES_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sslasr/audio.hpp"

namespace sslasr {

struct FeatureConfig {
  int n_fft = 400;   // 25 ms @ 16 kHz
  int hop = 160;     // 10 ms
  int n_mels = 80;
  double fmin = 20.0;
  double fmax = 7600.0;
  int n_mfcc = 13;
  double dither = 0.0;

  void validate(int sample_rate) const;
};

enum class FeatureKind : uint8_t { fbank = 0, mfcc = 1, latent = 2 };
std::string feature_kind_name(FeatureKind k);
FeatureKind feature_kind_from_name(const std::string& name);

/// Row-major dense matrix of doubles.
struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
};

/// Time-major feature frames with rate metadata.
struct FeatureMatrix {
  Matrix m;
  double frame_rate = 0.0;  // Hz
  FeatureKind kind = FeatureKind::fbank;

  int frames() const { return m.rows; }
  int dim() const { return m.cols; }
};

/// Number of analysis frames for a buffer of n_samples.
inline int frame_count(size_t n_samples, const FeatureConfig& cfg) {
  if (n_samples < static_cast<size_t>(cfg.n_fft)) return 0;
  return 1 + static_cast<int>((n_samples - cfg.n_fft) / cfg.hop);
}

/// Squared-magnitude DFT of periodic-Hann-windowed frames,
/// T x (n_fft/2 + 1). Throws DataError when the buffer is shorter than
/// one frame.
Matrix power_spectrogram(const AudioBuffer& buf, const FeatureConfig& cfg);

/// Triangular mel filters, n_mels x (n_fft/2 + 1).
Matrix mel_filterbank(const FeatureConfig& cfg, int sample_rate);

/// Log-mel filterbank features: log(mel . power + 1e-10).
FeatureMatrix fbank(const AudioBuffer& buf, const FeatureConfig& cfg);

/// First n_mfcc coefficients of the orthonormal DCT-II of each fbank frame.
FeatureMatrix mfcc(const FeatureMatrix& fb, int n_mfcc);

/// Per-utterance mean/variance normalization (variance floor 1e-8).
/// Requires at least two frames.
FeatureMatrix cmvn(const FeatureMatrix& f);

// ---------------------------------------------------------------------------
// Feature cache file: 8-byte magic, version byte, then per-utterance records
// {u32 id_len, id, u32 T, u32 D, f32 frame_rate, u8 kind, T*D f32 row-major},
// all little-endian.
// ---------------------------------------------------------------------------

class FeatureCacheWriter {
 public:
  explicit FeatureCacheWriter(const std::string& path, bool append = true);
  bool has(const std::string& id) const { return existing_.count(id) > 0; }
  void add(const std::string& id, const FeatureMatrix& f);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::map<std::string, bool> existing_;
};

/// Loads every record of a feature cache file.
std::map<std::string, FeatureMatrix> load_feature_cache(const std::string& path);

}  // namespace sslasr

#endif  // SSLASR_FEATURES_HPP
