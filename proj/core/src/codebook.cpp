// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "json.hpp"
#include "sslasr/common.hpp"

namespace sslasr {

using nlohmann::json;

namespace {

double sq_dist(const double* a, const double* b, int dim) {
  double s = 0;
  for (int i = 0; i < dim; ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double sq_dist_f(const double* a, const float* b, int dim) {
  double s = 0;
  for (int i = 0; i < dim; ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

Codebook kmeans_fit(const std::vector<double>& data, int n, int dim, int k,
                    int max_iters, uint64_t seed) {
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (n < k) throw DataError("kmeans: fewer points than clusters");
  if (static_cast<size_t>(n) * dim != data.size())
    throw DimError("kmeans: data size does not match n x dim");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto point = [&](int i) { return data.data() + static_cast<size_t>(i) * dim; };

  // k-means++ seeding
  std::vector<double> centroids(static_cast<size_t>(k) * dim);
  auto centroid = [&](int c) {
    return centroids.data() + static_cast<size_t>(c) * dim;
  };
  {
    int first = static_cast<int>(unif(rng) * n);
    first = std::min(first, n - 1);
    std::copy_n(point(first), dim, centroid(0));
    std::vector<double> d2(n);
    for (int i = 0; i < n; ++i) d2[i] = sq_dist(point(i), centroid(0), dim);
    for (int c = 1; c < k; ++c) {
      double total = 0;
      for (int i = 0; i < n; ++i) total += d2[i];
      int chosen;
      if (total <= 0) {
        chosen = static_cast<int>(unif(rng) * n);
        chosen = std::min(chosen, n - 1);
      } else {
        double r = unif(rng) * total;
        double acc = 0;
        chosen = n - 1;
        for (int i = 0; i < n; ++i) {
          acc += d2[i];
          if (acc >= r) {
            chosen = i;
            break;
          }
        }
      }
      std::copy_n(point(chosen), dim, centroid(c));
      for (int i = 0; i < n; ++i)
        d2[i] = std::min(d2[i], sq_dist(point(i), centroid(c), dim));
    }
  }

  std::vector<int> labels(n, -1);
  std::vector<double> inertia_history;
  int iters = 0;
  for (int iter = 0; iter < max_iters; ++iter) {
    // assignment
    bool changed = false;
    double inertia = 0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sq_dist(point(i), centroid(0), dim);
      for (int c = 1; c < k; ++c) {
        double d = sq_dist(point(i), centroid(c), dim);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      inertia += best_d;
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    inertia_history.push_back(inertia);
    iters = iter + 1;
    if (!changed) break;

    // update (64-bit accumulation)
    std::vector<double> sums(static_cast<size_t>(k) * dim, 0.0);
    std::vector<int64_t> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      double* s = sums.data() + static_cast<size_t>(labels[i]) * dim;
      const double* p = point(i);
      for (int d = 0; d < dim; ++d) s[d] += p[d];
      ++counts[labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        double inv = 1.0 / static_cast<double>(counts[c]);
        for (int d = 0; d < dim; ++d) centroid(c)[d] = sums[static_cast<size_t>(c) * dim + d] * inv;
      } else {
        // reseed to the point farthest from its assigned centroid
        int far_i = 0;
        double far_d = -1;
        for (int i = 0; i < n; ++i) {
          double d = sq_dist(point(i), centroid(labels[i]), dim);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        std::copy_n(point(far_i), dim, centroid(c));
      }
    }
  }

  Codebook cb;
  cb.k = k;
  cb.dim = dim;
  cb.centroids.resize(centroids.size());
  for (size_t i = 0; i < centroids.size(); ++i)
    cb.centroids[i] = static_cast<float>(centroids[i]);
  cb.meta.iters_run = iters;
  cb.meta.seed = seed;
  cb.meta.inertia = inertia_history.empty() ? 0.0 : inertia_history.back();
  cb.meta.inertia_history = std::move(inertia_history);
  return cb;
}

int assign_one(const double* x, const Codebook& cb) {
  int best = 0;
  double best_d = sq_dist_f(x, cb.centroid(0), cb.dim);
  for (int c = 1; c < cb.k; ++c) {
    double d = sq_dist_f(x, cb.centroid(c), cb.dim);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<int> assign(const Matrix& features, const Codebook& cb) {
  if (features.cols != cb.dim)
    throw DimError("assign: feature dimension does not match codebook");
  std::vector<int> labels(features.rows);
  for (int t = 0; t < features.rows; ++t)
    labels[t] = assign_one(features.row(t), cb);
  return labels;
}

// ---------------------------------------------------------------------------
// codebook file
// ---------------------------------------------------------------------------

namespace {

constexpr char kCodebookMagic[8] = {'S', 'S', 'L', 'C', 'D', 'B', 'K', '1'};
constexpr uint8_t kCodebookVersion = 1;

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

void save_codebook(const Codebook& cb, const std::string& path) {
  json meta;
  meta["iters_run"] = cb.meta.iters_run;
  meta["seed"] = cb.meta.seed;
  meta["inertia"] = cb.meta.inertia;
  meta["inertia_history"] = cb.meta.inertia_history;
  meta["checksum"] =
      hex64(fnv1a64(cb.centroids.data(), cb.centroids.size() * 4));
  std::string meta_str = meta.dump();

  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("codebook: cannot write " + path);
  out.write(kCodebookMagic, 8);
  put(out, kCodebookVersion);
  put(out, static_cast<uint32_t>(cb.k));
  put(out, static_cast<uint32_t>(cb.dim));
  put(out, static_cast<uint8_t>(cb.feature_kind));
  put(out, static_cast<float>(cb.frame_rate));
  put(out, static_cast<uint32_t>(meta_str.size()));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  out.write(reinterpret_cast<const char*>(cb.centroids.data()),
            static_cast<std::streamsize>(cb.centroids.size() * 4));
  if (!out) throw DataError("codebook: write failed for " + path);
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("codebook: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCodebookMagic, 8) != 0)
    throw FormatError("codebook: bad magic in " + path);
  if (get<uint8_t>(in) != kCodebookVersion)
    throw FormatError("codebook: unsupported version in " + path);
  Codebook cb;
  cb.k = static_cast<int>(get<uint32_t>(in));
  cb.dim = static_cast<int>(get<uint32_t>(in));
  cb.feature_kind = static_cast<FeatureKind>(get<uint8_t>(in));
  cb.frame_rate = get<float>(in);
  auto meta_len = get<uint32_t>(in);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), meta_len);
  if (!in) throw FormatError("codebook: truncated metadata in " + path);
  json meta = json::parse(meta_str, nullptr, false);
  if (meta.is_discarded())
    throw FormatError("codebook: corrupt metadata JSON in " + path);
  cb.meta.iters_run = meta.value("iters_run", 0);
  cb.meta.seed = meta.value("seed", 0ull);
  cb.meta.inertia = meta.value("inertia", 0.0);
  cb.meta.inertia_history =
      meta.value("inertia_history", std::vector<double>{});
  cb.centroids.resize(static_cast<size_t>(cb.k) * cb.dim);
  in.read(reinterpret_cast<char*>(cb.centroids.data()),
          static_cast<std::streamsize>(cb.centroids.size() * 4));
  if (!in) throw FormatError("codebook: truncated centroids in " + path);
  if (meta.contains("checksum") &&
      meta["checksum"].get<std::string>() !=
          hex64(fnv1a64(cb.centroids.data(), cb.centroids.size() * 4)))
    throw FormatError("codebook: centroid checksum mismatch in " + path);
  return cb;
}

// ---------------------------------------------------------------------------
// label store
// ---------------------------------------------------------------------------

namespace {
constexpr char kLabelMagic[8] = {'S', 'S', 'L', 'L', 'A', 'B', 'L', '1'};
constexpr uint8_t kLabelVersion = 1;
}  // namespace

LabelStore LabelStore::open(const std::string& path) {
  LabelStore store;
  store.path_ = path;
  std::ifstream in(path, std::ios::binary);
  if (in) {
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kLabelMagic, 8) != 0)
      throw FormatError("labels: bad magic in " + path);
    if (get<uint8_t>(in) != kLabelVersion)
      throw FormatError("labels: unsupported version in " + path);
    while (in) {
      auto id_len = get<uint32_t>(in);
      if (!in) break;
      std::string id(id_len, '\0');
      in.read(id.data(), id_len);
      auto T = get<uint32_t>(in);
      auto rate = get<float>(in);
      LabelRecord rec;
      rec.frame_rate = rate;
      rec.labels.resize(T);
      in.read(reinterpret_cast<char*>(rec.labels.data()),
              static_cast<std::streamoff>(T) * 2);
      if (!in) throw FormatError("labels: truncated record in " + path);
      store.records_[id] = std::move(rec);
    }
  } else {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(kLabelMagic, 8);
    put(out, kLabelVersion);
    if (!out) throw DataError("labels: cannot create " + path);
  }
  return store;
}

void LabelStore::add(const std::string& id, double frame_rate,
                     const std::vector<uint16_t>& labels) {
  if (has(id)) return;
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  put(out, static_cast<uint32_t>(id.size()));
  out.write(id.data(), static_cast<std::streamsize>(id.size()));
  put(out, static_cast<uint32_t>(labels.size()));
  put(out, static_cast<float>(frame_rate));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size() * 2));
  if (!out) throw DataError("labels: write failed for " + path_);
  records_[id] = LabelRecord{frame_rate, labels};
}

const LabelRecord& LabelStore::at(const std::string& id) const {
  auto it = records_.find(id);
  if (it == records_.end()) throw DataError("labels: no record for id " + id);
  return it->second;
}

ExtractReport extract_labels_for_corpus(
    const std::function<FeatureMatrix(const Utterance&)>& feature_fn,
    const Manifest& manifest, const Codebook& cb, LabelStore* store) {
  if (cb.k > 65535) throw ConfigError("labels: k exceeds u16 id range");
  ExtractReport report;
  for (const auto& u : manifest.utterances) {
    if (store->has(u.id)) {
      ++report.skipped_existing;
      continue;
    }
    try {
      FeatureMatrix f = feature_fn(u);
      if (f.kind != cb.feature_kind)
        throw DataError("labels: feature kind does not match codebook for " +
                        u.id);
      auto ids = assign(f.m, cb);
      std::vector<uint16_t> labels(ids.begin(), ids.end());
      store->add(u.id, f.frame_rate, labels);
      ++report.written;
    } catch (const std::exception&) {
      report.failed_ids.push_back(u.id);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// quality metrics
// ---------------------------------------------------------------------------

std::vector<int> pool_labels(const std::vector<int>& labels, double rate_in,
                             double rate_out, int len_out) {
  double hi = std::max(rate_in, rate_out), lo = std::min(rate_in, rate_out);
  double ratio = hi / lo;
  if (std::fabs(ratio - std::round(ratio)) > 1e-9)
    throw ConfigError("pool_labels: frame rates are not integer multiples");
  std::vector<int> out(len_out);
  for (int j = 0; j < len_out; ++j) {
    auto lo_idx = static_cast<int64_t>(std::floor(j * rate_in / rate_out + 1e-9));
    auto hi_idx =
        static_cast<int64_t>(std::floor((j + 1) * rate_in / rate_out + 1e-9));
    lo_idx = std::clamp<int64_t>(lo_idx, 0, static_cast<int64_t>(labels.size()) - 1);
    hi_idx = std::clamp<int64_t>(hi_idx, lo_idx + 1, static_cast<int64_t>(labels.size()));
    std::map<int, int> votes;
    for (int64_t t = lo_idx; t < hi_idx; ++t) ++votes[labels[t]];
    int best = votes.begin()->first, best_n = votes.begin()->second;
    for (auto& [id, n] : votes) {
      if (n > best_n) {  // ties keep the lowest id (map iterates ascending)
        best = id;
        best_n = n;
      }
    }
    out[j] = best;
  }
  return out;
}

ClusterMetrics codebook_quality(const LabelStore& store,
                                const Alignments& reference,
                                double reference_rate) {
  if (store.size() == 0) throw DataError("codebook_quality: empty label store");
  std::map<std::pair<int, int>, int64_t> contingency;  // (cluster, unit)
  std::map<int, int64_t> cluster_n, unit_n;
  int64_t total = 0;
  for (const auto& [id, rec] : store.records()) {
    auto ref_it = reference.find(id);
    if (ref_it == reference.end()) continue;
    auto pooled = pool_labels(ref_it->second, reference_rate, rec.frame_rate,
                              static_cast<int>(rec.labels.size()));
    for (size_t t = 0; t < rec.labels.size(); ++t) {
      int c = rec.labels[t], u = pooled[t];
      ++contingency[{c, u}];
      ++cluster_n[c];
      ++unit_n[u];
      ++total;
    }
  }
  if (total == 0)
    throw DataError("codebook_quality: no overlap between store and reference");

  ClusterMetrics m;
  m.cluster_counts = cluster_n;
  std::map<int, int64_t> cluster_max;
  for (const auto& [cu, n] : contingency)
    cluster_max[cu.first] = std::max(cluster_max[cu.first], n);
  int64_t majority = 0;
  for (const auto& [c, n] : cluster_max) majority += n;
  m.purity = static_cast<double>(majority) / static_cast<double>(total);

  double h_unit = 0, mi = 0;
  for (const auto& [u, n] : unit_n) {
    double p = static_cast<double>(n) / total;
    h_unit -= p * std::log(p);
  }
  for (const auto& [cu, n] : contingency) {
    double p = static_cast<double>(n) / total;
    double pc = static_cast<double>(cluster_n[cu.first]) / total;
    double pu = static_cast<double>(unit_n[cu.second]) / total;
    mi += p * std::log(p / (pc * pu));
  }
  m.pnmi = h_unit > 0 ? std::max(0.0, mi / h_unit) : 0.0;
  return m;
}

}  // namespace sslasr
