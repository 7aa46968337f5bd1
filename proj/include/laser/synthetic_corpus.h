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

#ifndef LASER_SYNTHETIC_CORPUS_H_
#define LASER_SYNTHETIC_CORPUS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "laser/core_data.h"
#include "laser/rng.h"

namespace laser {

struct SynthConfig {
  int num_tracks = 8;
  int t_min = 16;
  int t_max = 24;
  double fps = 25.0;
  int crop_size = 112;
  double speaking_fraction = 0.5;
  std::vector<double> noise_rms = {0.01};
  std::uint64_t seed = 1;
  int landmark_count = 82;
  int sample_rate = 16000;
  int tracks_per_video = 4;
  // Chance that a track contains a stretch of silence (no tone at all).
  double silence_gap_prob = 0.25;

  void validate() const;
};

// One generated track plus the latent signals that drove it; the latents are
// what test oracles correlate against.
struct SynthTrack {
  FaceTrack track;
  LipTrack lips;
  Waveform audio;
  std::vector<double> aperture;  // mouth opening a_t in [0,1]
  std::vector<double> envelope;  // audio amplitude envelope e_t in [0,1]
  double noise_rms = 0.0;
};

// Procedural face/audio pair. On speaking runs the mouth aperture follows
// the audio envelope; on non-speaking runs it oscillates at a frequency at
// least 2.5 Hz away from the concurrent envelope, which keeps windowed
// correlation bounded while the marginal mouth statistics stay label-free.
SynthTrack generate_track(const SynthConfig& cfg, Rng& rng, double noise_rms);

// Full corpus: per-track rng forked from cfg.seed, noise levels assigned
// round-robin, ids trk_%04d / vid_%03d.
std::vector<SynthTrack> generate_corpus(const SynthConfig& cfg);

// Simulates landmark detector failure. whole_tracks == true drops complete
// tracks with probability drop_rate, otherwise individual frames.
LipTrack degrade_landmarks(const LipTrack& lips, double drop_rate, Rng& rng,
                           bool whole_tracks = true);

// Writes manifest.jsonl + frames/*.lsrt + audio/*.wav under dir, plus a
// synth_meta.json sidecar recording each track's configured noise level.
void write_corpus(const std::vector<SynthTrack>& tracks,
                  const std::string& dir);

// In-memory view used by training and evaluation.
std::vector<TrackData> to_track_data(const std::vector<SynthTrack>& tracks);

}  // namespace laser

#endif  // LASER_SYNTHETIC_CORPUS_H_
