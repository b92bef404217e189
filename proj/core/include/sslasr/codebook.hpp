// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_CODEBOOK_HPP
#define SSLASR_CODEBOOK_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sslasr/corpus.hpp"
#include "sslasr/features.hpp"

namespace sslasr {

/// k-means centroids over a feature space. Centroids are kept in 32-bit
/// precision (the wire format), so assignments are identical before and
/// after a save/load round trip.
struct Codebook {
  int k = 0;
  int dim = 0;
  FeatureKind feature_kind = FeatureKind::fbank;
  double frame_rate = 0.0;
  std::vector<float> centroids;  // k x dim row-major

  struct Meta {
    int iters_run = 0;
    uint64_t seed = 0;
    double inertia = 0.0;
    std::vector<double> inertia_history;  // one entry per Lloyd iteration
  } meta;

  const float* centroid(int c) const {
    return centroids.data() + static_cast<size_t>(c) * dim;
  }
};

/// k-means++ seeding followed by Lloyd iterations until the assignment
/// reaches a fixpoint or max_iters. Empty clusters are reseeded to the
/// point farthest from its assigned centroid. Deterministic given seed.
/// data is N x dim row-major; requires N >= k.
Codebook kmeans_fit(const std::vector<double>& data, int n, int dim, int k,
                    int max_iters, uint64_t seed);

/// Nearest centroid in Euclidean distance; ties pick the lowest index.
std::vector<int> assign(const Matrix& features, const Codebook& cb);
int assign_one(const double* x, const Codebook& cb);

void save_codebook(const Codebook& cb, const std::string& path);
Codebook load_codebook(const std::string& path);

// ---------------------------------------------------------------------------
// Label store: per-utterance class-id records (u16), one file per store.
// ---------------------------------------------------------------------------

struct LabelRecord {
  double frame_rate = 0.0;
  std::vector<uint16_t> labels;
};

class LabelStore {
 public:
  LabelStore() = default;
  /// Opens an existing store (scanning its records) or creates an empty one.
  static LabelStore open(const std::string& path);

  bool has(const std::string& id) const { return records_.count(id) > 0; }
  void add(const std::string& id, double frame_rate,
           const std::vector<uint16_t>& labels);
  const std::map<std::string, LabelRecord>& records() const { return records_; }
  const LabelRecord& at(const std::string& id) const;
  const std::string& path() const { return path_; }
  size_t size() const { return records_.size(); }

 private:
  std::string path_;
  std::map<std::string, LabelRecord> records_;
};

/// Extracts one label record per manifest utterance using feature_fn and
/// the codebook. Existing records are kept (resumable); per-utterance
/// failures are recorded and the run continues.
struct ExtractReport {
  int written = 0;
  int skipped_existing = 0;
  std::vector<std::string> failed_ids;
};
ExtractReport extract_labels_for_corpus(
    const std::function<FeatureMatrix(const Utterance&)>& feature_fn,
    const Manifest& manifest, const Codebook& cb, LabelStore* store);

// ---------------------------------------------------------------------------
// Cluster quality against reference unit alignments
// ---------------------------------------------------------------------------

struct ClusterMetrics {
  double purity = 0.0;  // sum of per-cluster majority-unit mass
  double pnmi = 0.0;    // I(cluster; unit) / H(unit)
  std::map<int, int64_t> cluster_counts;
};

/// Pools the 100 Hz reference units down to the label frame rate with the
/// majority rule (ties -> lowest unit id), then accumulates the
/// cluster/unit contingency over all utterances present in both.
ClusterMetrics codebook_quality(const LabelStore& store,
                                const Alignments& reference,
                                double reference_rate = 100.0);

/// Majority-vote label pooling between frame rates (rates must be integer
/// multiples in one direction or the other). Output frame j covers input
/// frames [floor(j*r_in/r_out), floor((j+1)*r_in/r_out)), clamped; ties
/// pick the lowest id.
std::vector<int> pool_labels(const std::vector<int>& labels, double rate_in,
                             double rate_out, int len_out);

}  // namespace sslasr

#endif  // SSLASR_CODEBOOK_HPP
