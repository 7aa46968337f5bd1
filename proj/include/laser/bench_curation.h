// Copyright 2026 The LASER Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.

#ifndef LASER_BENCH_CURATION_H_
#define LASER_BENCH_CURATION_H_

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "laser/core_data.h"

namespace laser {

struct CurationConfig {
  double min_track_seconds = 0.2;  // reference setting
  double rms_threshold = 0.03;     // reference setting
  std::string vad = "energy";      // "energy" or "external:<command>"
  double vad_threshold = 0.1;
  double vad_frame_ms = 20.0;

  void validate() const;
};

// Non-overlapping speech intervals in seconds.
struct VadSegments {
  std::vector<std::pair<double, double>> segments;

  void validate() const;
  double total_seconds() const;
};

// Reference VAD: a frame is speech when its short-time RMS exceeds the
// threshold; adjacent speech frames merge into segments.
VadSegments energy_vad(const Waveform& audio, double frame_ms,
                       double threshold);

// Runs `command <wav_path>` and parses a JSON array of {start, end} seconds
// from stdout. Nonzero exit is an error.
VadSegments external_vad(const std::string& command,
                         const std::string& wav_path);

// RMS over samples outside the VAD segments; nullopt ("undetermined") when
// less than 0.1 s of background remains. Samples are full-scale [-1, 1].
std::optional<double> background_rms(const Waveform& audio,
                                     const VadSegments& vad);

struct NoiseSplit {
  std::vector<std::string> low;
  std::vector<std::string> high;
  std::vector<std::string> undetermined;
  double threshold = 0.03;

  nlohmann::json to_json() const;  // includes the normalization convention
};

// RMS < threshold -> low; RMS >= threshold -> high; nullopt -> undetermined.
NoiseSplit noise_split(
    const std::vector<std::pair<std::string, std::optional<double>>>& clip_rms,
    double threshold);

// Raw face-detection tracks with per-frame gaps, prior to curation.
struct RawDetection {
  std::int64_t frame_offset = 0;           // within the track, gaps allowed
  Tensor crop;                             // [S, S]
  std::uint8_t label = 0;
  std::optional<LandmarkSet> landmarks;
  std::array<double, 4> bbox = {0, 0, 0, 0};  // x, y, w, h in source video
};

struct RawTrack {
  std::string track_id;
  std::string video_id;
  double fps = 25.0;
  double start_time = 0.0;
  std::vector<RawDetection> detections;  // ascending frame_offset
};

struct CuratedTrack {
  FaceTrack track;
  LipTrack lips;
  std::vector<std::array<double, 4>> boxes;  // interior gaps interpolated
};

// Drops tracks shorter than min_track_seconds (inclusive boundary keeps) and
// fills interior gaps: bounding boxes linearly interpolated, pixels and
// labels substituted from the nearest detection, landmarks left absent.
// Never extrapolates beyond the first/last detection.
std::vector<CuratedTrack> filter_and_interpolate(
    const std::vector<RawTrack>& raw, const CurationConfig& cfg);

}  // namespace laser

#endif  // LASER_BENCH_CURATION_H_
