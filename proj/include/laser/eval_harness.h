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

#ifndef LASER_EVAL_HARNESS_H_
#define LASER_EVAL_HARNESS_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "laser/asd_model.h"
#include "laser/core_data.h"
#include "laser/rng.h"

namespace laser {

struct EvalProtocolConfig {
  std::string protocol = "standard";  // standard | swap | shift | noise_split
  std::vector<double> delays = {0.2, 0.4, 0.6, 0.8, 1.0};
  double rms_threshold = 0.03;  // reference setting
  bool with_lte = false;
  std::uint64_t seed = 0;
  double vad_threshold = 0.1;
  double vad_frame_ms = 20.0;
  int n_mels = 40;

  void validate() const;
};

// Average precision over the score-ranked frame list (no interpolation,
// stable tie order). Single-class task, so mAP == AP. Throws when there is
// no positive frame: accuracy is the metric for all-negative protocols.
double mean_average_precision(const std::vector<double>& scores,
                              const std::vector<std::uint8_t>& labels);

// Fraction of frames where (speaking prob >= 0.5) matches the label.
double per_frame_accuracy(const std::vector<FramePredictions>& preds,
                          const std::vector<std::vector<std::uint8_t>>& labels);

// Replaces each track's audio with the audio of a uniformly chosen track
// from a different video and relabels every frame not-speaking.
std::vector<TrackData> swap_audio(const std::vector<TrackData>& corpus,
                                  Rng& rng);

// Delays audio by `delay_s` of leading silence, truncating the tail.
Waveform shift_audio(const Waveform& audio, double delay_s);

struct EvalReport {
  std::string protocol;
  std::map<std::string, double> metrics;
  std::map<std::string, std::int64_t> counts;
  nlohmann::json config_echo;

  nlohmann::json to_json() const;
  void write(const std::string& path) const;
};

EvalReport evaluate(AsdModel& model, const std::vector<TrackData>& corpus,
                    const EvalProtocolConfig& cfg);

}  // namespace laser

#endif  // LASER_EVAL_HARNESS_H_
