// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_COMMON_HPP
#define SSLASR_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sslasr {

/// Bad configuration (invalid parameter combinations, unusable settings).
/// The CLI maps this to exit code 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file content (bad header, wrong magic, schema).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Runtime data problem (missing file, inconsistent lengths, bad id).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor/matrix shape mismatch; the message names the offending op.
struct DimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// FNV-1a 64-bit hash, used for artifact integrity checksums.
uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull);
uint64_t fnv1a64_file(const std::string& path);
std::string hex64(uint64_t v);

/// Derives an independent RNG stream seed from a master seed and a stream tag
/// (splitmix64 finalizer). Identical (seed, tag) pairs give identical streams.
uint64_t derive_seed(uint64_t seed, uint64_t stream);
uint64_t derive_seed(uint64_t seed, const std::string& stream);

inline double db_to_power(double db) { return std::pow(10.0, db / 10.0); }
inline double power_to_db(double p) { return 10.0 * std::log10(p); }

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
void ensure_parent_dir(const std::string& path);

}  // namespace sslasr

#endif  // SSLASR_COMMON_HPP
