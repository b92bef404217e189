// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "sslasr/common.hpp"

namespace sslasr {

void AudioBuffer::validate() const {
  if (sample_rate <= 0) throw DataError("audio: sample_rate must be positive");
  if (samples.empty()) throw DataError("audio: empty buffer");
  for (float s : samples) {
    if (!std::isfinite(s)) throw DataError("audio: non-finite sample");
  }
}

namespace {

uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16le(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32le(std::ostream& out, uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16le(std::ostream& out, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("wav: cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw FormatError("wav: missing RIFF header in " + path);
  read_u32le(in);  // riff size, unused
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw FormatError("wav: missing WAVE tag in " + path);

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  AudioBuffer buf;

  // Walk chunks; accept fmt/data in any order, skip the rest.
  while (in) {
    in.read(tag, 4);
    if (!in) break;
    uint32_t size = read_u32le(in);
    if (!in) throw FormatError("wav: truncated chunk header in " + path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("wav: short fmt chunk in " + path);
      format = read_u16le(in);
      channels = read_u16le(in);
      rate = read_u32le(in);
      read_u32le(in);  // byte rate
      read_u16le(in);  // block align
      bits = read_u16le(in);
      in.seekg(size - 16 + (size & 1), std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt in " + path);
      if (format != 1)
        throw FormatError("wav: unsupported encoding (want PCM) in " + path);
      if (channels != 1)
        throw FormatError("wav: unsupported channel count (want mono) in " +
                          path);
      if (bits != 16)
        throw FormatError("wav: unsupported bit depth (want 16) in " + path);
      size_t n = size / 2;
      std::vector<char> raw(size);
      in.read(raw.data(), size);
      if (static_cast<uint32_t>(in.gcount()) != size)
        throw FormatError("wav: truncated data chunk in " + path);
      buf.samples.resize(n);
      for (size_t i = 0; i < n; ++i) {
        int16_t s = static_cast<int16_t>(
            static_cast<unsigned char>(raw[2 * i]) |
            (static_cast<unsigned char>(raw[2 * i + 1]) << 8));
        buf.samples[i] = static_cast<float>(s) / 32768.0f;
      }
      buf.sample_rate = static_cast<int>(rate);
      return buf;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  throw FormatError("wav: no data chunk in " + path);
}

void write_wav(const AudioBuffer& buf, const std::string& path) {
  buf.validate();
  for (float s : buf.samples) {
    if (s < -1.0f || s > 1.0f)
      throw DataError("wav: sample out of [-1,1] range, refusing to clip");
  }
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("wav: cannot open for writing " + path);

  uint32_t data_bytes = static_cast<uint32_t>(buf.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32le(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32le(out, 16);
  write_u16le(out, 1);  // PCM
  write_u16le(out, 1);  // mono
  write_u32le(out, static_cast<uint32_t>(buf.sample_rate));
  write_u32le(out, static_cast<uint32_t>(buf.sample_rate * 2));
  write_u16le(out, 2);
  write_u16le(out, 16);
  out.write("data", 4);
  write_u32le(out, data_bytes);
  for (float s : buf.samples) {
    long q = std::lrint(static_cast<double>(s) * 32768.0);
    q = std::min<long>(32767, std::max<long>(-32768, q));
    write_u16le(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  if (!out) throw DataError("wav: write failed for " + path);
}

std::vector<Segment> energy_vad(const AudioBuffer& buf, double frame_ms,
                                double hop_ms, double threshold_db,
                                double min_segment_ms, double hangover_ms) {
  if (hop_ms <= 0 || frame_ms < hop_ms)
    throw ConfigError("vad: need frame_ms >= hop_ms > 0");
  buf.validate();

  const auto frame = static_cast<size_t>(frame_ms * buf.sample_rate / 1000.0);
  const auto hop = static_cast<size_t>(hop_ms * buf.sample_rate / 1000.0);
  if (frame == 0 || hop == 0) throw ConfigError("vad: frame shorter than one sample");

  const double thresh_power = db_to_power(threshold_db);
  std::vector<std::pair<size_t, size_t>> speech;  // sample ranges
  for (size_t start = 0; start < buf.samples.size(); start += hop) {
    size_t end = std::min(start + frame, buf.samples.size());
    double acc = 0.0;
    for (size_t i = start; i < end; ++i)
      acc += static_cast<double>(buf.samples[i]) * buf.samples[i];
    double power = acc / static_cast<double>(end - start);
    if (power >= thresh_power) speech.emplace_back(start, end);
  }
  if (speech.empty()) return {};

  // Merge frames whose gap is within the hangover.
  const auto hang = static_cast<size_t>(hangover_ms * buf.sample_rate / 1000.0);
  std::vector<std::pair<size_t, size_t>> merged{speech.front()};
  for (size_t i = 1; i < speech.size(); ++i) {
    if (speech[i].first <= merged.back().second + hang)
      merged.back().second = std::max(merged.back().second, speech[i].second);
    else
      merged.push_back(speech[i]);
  }

  // Grow short segments to the minimum length instead of dropping them,
  // extending right first and falling back to the left at the buffer edge.
  const auto min_len =
      static_cast<size_t>(min_segment_ms * buf.sample_rate / 1000.0);
  for (auto& seg : merged) {
    if (seg.second - seg.first >= min_len) continue;
    size_t need = min_len - (seg.second - seg.first);
    size_t grow_right = std::min(need, buf.samples.size() - seg.second);
    seg.second += grow_right;
    need -= grow_right;
    seg.first -= std::min(need, seg.first);
  }
  // Extension may have created overlaps; merge once more.
  std::vector<std::pair<size_t, size_t>> final_segs{merged.front()};
  for (size_t i = 1; i < merged.size(); ++i) {
    if (merged[i].first <= final_segs.back().second)
      final_segs.back().second =
          std::max(final_segs.back().second, merged[i].second);
    else
      final_segs.push_back(merged[i]);
  }

  std::vector<Segment> out;
  out.reserve(final_segs.size());
  for (auto& [s, e] : final_segs)
    out.emplace_back(static_cast<double>(s) / buf.sample_rate,
                     static_cast<double>(e) / buf.sample_rate);
  return out;
}

}  // namespace sslasr
