// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_CHECKPOINT_HPP
#define SSLASR_CHECKPOINT_HPP

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sslasr/tensor.hpp"

namespace sslasr {

/// Versioned binary model container:
///   8-byte magic, version byte, u32 header length, canonical-JSON header,
///   then the named parameter blobs as row-major 32-bit little-endian
///   floats in header order. The header carries the model config, the
///   parameter directory (name + shape), and an FNV-1a checksum of the
///   payload, so `inspect` never has to touch the blobs.
struct Checkpoint {
  nlohmann::json config;
  std::vector<std::pair<std::string, ad::Tensor>> params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Parsed header of any sslasr binary artifact (checkpoint, codebook,
/// label store, feature cache), without payload.
struct ArtifactInfo {
  std::string kind;     // "checkpoint" | "codebook" | "labels" | "features"
  int version = 0;
  nlohmann::json header;  // kind-specific fields
};

ArtifactInfo inspect_artifact(const std::string& path);

}  // namespace sslasr

#endif  // SSLASR_CHECKPOINT_HPP
