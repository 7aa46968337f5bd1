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

#ifndef LASER_CORE_DATA_H_
#define LASER_CORE_DATA_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "laser/io.h"
#include "laser/tensor.h"

namespace laser {

// A temporally contiguous sequence of square grayscale face crops with
// per-frame speaking labels. Crops are stored [T, S, S] with the first
// spatial axis horizontal (pixel (x, y) lives at frames[t, x, y]); crops are
// square by invariant so this stays coherent with the [T,H,W] file layout.
struct FaceTrack {
  std::string track_id;
  std::string video_id;
  double fps = 25.0;
  Tensor frames;                     // [T, S, S], values in [0, 1]
  std::vector<std::uint8_t> labels;  // 1 = speaking
  double start_time = 0.0;

  std::int64_t length() const { return frames.defined() ? frames.dim(0) : 0; }
  std::int64_t crop_size() const { return frames.defined() ? frames.dim(1) : 0; }
  double duration_s() const { return static_cast<double>(length()) / fps; }
  void validate() const;  // throws DataError
};

using LandmarkSet = std::vector<std::array<int, 2>>;  // K integer (x, y)

// Per-frame lip landmarks; absence of a frame's detection is first-class.
struct LipTrack {
  int landmark_count = 82;
  std::vector<std::optional<LandmarkSet>> frames;

  std::int64_t length() const { return static_cast<std::int64_t>(frames.size()); }
  bool all_absent() const;
  void validate(std::int64_t track_len) const;
};

struct MelSpectrogram {
  static constexpr int kFramesPerVideoFrame = 4;
  Tensor values;  // [4T, N]
  int sample_rate = 0;
  int n_mels = 0;

  std::int64_t rows() const { return values.defined() ? values.dim(0) : 0; }
};

// Per-frame class distributions for the three heads; column 1 = speaking.
struct FramePredictions {
  Tensor probs_av;  // [T, 2]
  Tensor probs_v;
  Tensor probs_a;

  std::int64_t length() const { return probs_av.defined() ? probs_av.dim(0) : 0; }
  void validate(double tol = 1e-6) const;
};

struct ManifestEntry {
  std::string track_id;
  std::string video_id;
  double fps = 25.0;
  std::string frames_path;
  std::string audio_path;
  std::vector<std::uint8_t> labels;
  // Length-T list; nullopt per frame when the detector had no output.
  std::vector<std::optional<LandmarkSet>> landmarks;
  double start_time = 0.0;
  std::int64_t crop_size = 0;  // from the frame file header
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;

  const ManifestEntry& find(const std::string& track_id) const;
};

// JSON-lines manifest. Loading validates eagerly: referenced files must
// exist, label/landmark lengths must match the frame tensor header.
CorpusManifest load_manifest(const std::string& path);
void save_manifest(const CorpusManifest& m, const std::string& path);

struct TrackData {
  FaceTrack track;
  LipTrack lips;
  Waveform audio;
};

TrackData load_track(const ManifestEntry& entry, int landmark_count = 82);

// Mel spectrogram aligned 4:1 with video frames: hop = sample_rate/(4*fps)
// samples; rows whose window starts past the audio end are zero. Values are
// log1p of mel-filtered power.
MelSpectrogram compute_mel(const Waveform& audio, const FaceTrack& track,
                           int n_mels = 40);

// HTK-style triangular filterbank, [n_mels, n_fft/2 + 1].
Tensor mel_filterbank(int n_mels, int n_fft, int sample_rate);
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Prediction CSV: header `track_id,frame_index,score`, score is the
// audiovisual speaking probability; rows ordered by (track_id, frame).
void save_predictions(
    const std::vector<std::pair<std::string, FramePredictions>>& preds,
    const std::string& path);
std::vector<std::pair<std::string, std::vector<double>>> load_predictions(
    const std::string& path);

}  // namespace laser

#endif  // LASER_CORE_DATA_H_
