// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_AUDIO_HPP
#define SSLASR_AUDIO_HPP

#include <string>
#include <utility>
#include <vector>

namespace sslasr {

/// Mono audio with amplitudes in [-1, 1].
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = 16000;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  void validate() const;  // throws DataError on violated invariants
};

/// Reads a 16-bit PCM mono WAV file. Samples are scaled by 1/32768.
/// Throws FormatError on a malformed header and on unsupported encodings
/// (non-PCM, multi-channel, bit depths other than 16).
AudioBuffer read_wav(const std::string& path);

/// Writes a 16-bit PCM mono WAV file. Samples must lie in [-1, 1];
/// out-of-range input is rejected with DataError rather than clipped.
void write_wav(const AudioBuffer& buf, const std::string& path);

/// Speech segment in seconds, [start, end).
using Segment = std::pair<double, double>;

/// Log-energy voice activity detection with hangover merging.
///
/// Frames of frame_ms are taken every hop_ms; a frame is speech when its
/// mean power is above threshold_db (dBFS). Adjacent speech frames merge
/// into segments; gaps up to hangover_ms are bridged. Segments shorter
/// than min_segment_ms are extended (never dropped, so every frame above
/// threshold stays inside a segment), clamped to the buffer bounds.
/// Returns disjoint, ordered segments. Silence yields an empty list.
std::vector<Segment> energy_vad(const AudioBuffer& buf, double frame_ms,
                                double hop_ms, double threshold_db,
                                double min_segment_ms,
                                double hangover_ms = 30.0);

}  // namespace sslasr

#endif  // SSLASR_AUDIO_HPP
