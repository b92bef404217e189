// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "sslasr/common.hpp"

namespace sslasr {

using nlohmann::json;

namespace {

constexpr char kCkptMagic[8] = {'S', 'S', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr uint8_t kCkptVersion = 1;

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

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  // Payload first, so its checksum can go into the header.
  std::string payload;
  json dir = json::array();
  for (const auto& [name, tensor] : ckpt.params) {
    json entry;
    entry["name"] = name;
    entry["shape"] = tensor.shape();
    dir.push_back(entry);
    for (double v : tensor.values()) {
      float f = static_cast<float>(v);
      char b[4];
      std::memcpy(b, &f, 4);
      payload.append(b, 4);
    }
  }
  json header;
  header["config"] = ckpt.config;
  header["params"] = dir;
  header["payload_checksum"] =
      hex64(fnv1a64(payload.data(), payload.size()));
  std::string header_str = header.dump();

  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot write " + path);
  out.write(kCkptMagic, 8);
  put(out, kCkptVersion);
  put(out, static_cast<uint32_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  auto version = get<uint8_t>(in);
  if (version != kCkptVersion)
    throw FormatError("checkpoint: unsupported version in " + path);
  auto header_len = get<uint32_t>(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) throw FormatError("checkpoint: truncated header in " + path);
  json header = json::parse(header_str, nullptr, false);
  if (header.is_discarded())
    throw FormatError("checkpoint: corrupt header JSON in " + path);

  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  std::string want = header.at("payload_checksum").get<std::string>();
  if (hex64(fnv1a64(payload.data(), payload.size())) != want)
    throw FormatError("checkpoint: payload checksum mismatch in " + path);

  Checkpoint ckpt;
  ckpt.config = header.at("config");
  size_t off = 0;
  for (const auto& entry : header.at("params")) {
    std::string name = entry.at("name").get<std::string>();
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    int64_t n = 1;
    for (int d : shape) n *= d;
    if (off + static_cast<size_t>(n) * 4 > payload.size())
      throw FormatError("checkpoint: truncated payload in " + path);
    std::vector<double> values(n);
    for (int64_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, payload.data() + off, 4);
      off += 4;
      values[i] = f;
    }
    ckpt.params.emplace_back(
        name, ad::make_leaf(shape, std::move(values), true));
  }
  return ckpt;
}

ArtifactInfo inspect_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("inspect: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in) throw FormatError("inspect: file too short: " + path);

  ArtifactInfo info;
  if (std::memcmp(magic, kCkptMagic, 8) == 0) {
    info.kind = "checkpoint";
    info.version = get<uint8_t>(in);
    auto header_len = get<uint32_t>(in);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    if (!in) throw FormatError("inspect: truncated header in " + path);
    info.header = json::parse(header_str);
    return info;
  }
  if (std::memcmp(magic, "SSLCDBK1", 8) == 0) {
    info.kind = "codebook";
    info.version = get<uint8_t>(in);
    auto k = get<uint32_t>(in);
    auto dim = get<uint32_t>(in);
    auto kind = get<uint8_t>(in);
    auto rate = get<float>(in);
    auto meta_len = get<uint32_t>(in);
    std::string meta(meta_len, '\0');
    in.read(meta.data(), meta_len);
    if (!in) throw FormatError("inspect: truncated codebook header in " + path);
    info.header = {{"k", k},
                   {"dim", dim},
                   {"feature_kind", kind},
                   {"frame_rate", rate},
                   {"metadata", json::parse(meta)}};
    return info;
  }
  if (std::memcmp(magic, "SSLLABL1", 8) == 0) {
    info.kind = "labels";
    info.version = get<uint8_t>(in);
    uint64_t records = 0, frames = 0;
    float rate = 0;
    while (in) {
      auto id_len = get<uint32_t>(in);
      if (!in) break;
      in.seekg(id_len, std::ios::cur);
      auto T = get<uint32_t>(in);
      rate = get<float>(in);
      in.seekg(static_cast<std::streamoff>(T) * 2, std::ios::cur);
      if (!in) throw FormatError("inspect: truncated label record in " + path);
      ++records;
      frames += T;
    }
    info.header = {{"records", records}, {"frames", frames}, {"frame_rate", rate}};
    return info;
  }
  if (std::memcmp(magic, "SSLFEAT1", 8) == 0) {
    info.kind = "features";
    info.version = get<uint8_t>(in);
    uint64_t records = 0, frames = 0;
    while (in) {
      auto id_len = get<uint32_t>(in);
      if (!in) break;
      in.seekg(id_len, std::ios::cur);
      auto T = get<uint32_t>(in);
      auto D = get<uint32_t>(in);
      get<float>(in);
      get<uint8_t>(in);
      in.seekg(static_cast<std::streamoff>(T) * D * 4, std::ios::cur);
      if (!in) throw FormatError("inspect: truncated feature record in " + path);
      ++records;
      frames += T;
    }
    info.header = {{"records", records}, {"frames", frames}};
    return info;
  }
  throw FormatError("inspect: unknown artifact magic in " + path);
}

}  // namespace sslasr
