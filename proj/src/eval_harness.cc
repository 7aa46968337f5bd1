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

#include "laser/eval_harness.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "laser/bench_curation.h"
#include "laser/common.h"

namespace laser {

void EvalProtocolConfig::validate() const {
  if (protocol != "standard" && protocol != "swap" && protocol != "shift" &&
      protocol != "noise_split")
    throw ConfigError("eval: unknown protocol '" + protocol + "'");
  for (double d : delays)
    if (d < 0) throw ConfigError("eval: negative delay");
  if (rms_threshold <= 0) throw ConfigError("eval: rms_threshold must be > 0");
}

double mean_average_precision(const std::vector<double>& scores,
                              const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw DataError("mAP: scores/labels length mismatch");
  std::int64_t positives = 0;
  for (auto l : labels) positives += l ? 1 : 0;
  if (positives == 0)
    throw DataError(
        "mAP: no positive frames; use the per-frame accuracy protocol");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  double ap = 0.0;
  std::int64_t seen_pos = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      ++seen_pos;
      ap += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
    }
  }
  return ap / static_cast<double>(positives);
}

double per_frame_accuracy(const std::vector<FramePredictions>& preds,
                          const std::vector<std::vector<std::uint8_t>>& labels) {
  if (preds.size() != labels.size())
    throw DataError("accuracy: preds/labels track count mismatch");
  std::int64_t correct = 0, total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Tensor& p = preds[i].probs_av;
    if (p.dim(0) != static_cast<std::int64_t>(labels[i].size()))
      throw DataError("accuracy: frame count mismatch");
    for (std::int64_t f = 0; f < p.dim(0); ++f) {
      const bool said_speaking = p[f * 2 + 1] >= 0.5;
      const bool is_speaking = labels[i][static_cast<std::size_t>(f)] != 0;
      correct += (said_speaking == is_speaking) ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

std::vector<TrackData> swap_audio(const std::vector<TrackData>& corpus,
                                  Rng& rng) {
  std::vector<TrackData> out = corpus;
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::vector<std::size_t> donors;
    for (std::size_t j = 0; j < corpus.size(); ++j)
      if (corpus[j].track.video_id != corpus[i].track.video_id)
        donors.push_back(j);
    if (donors.empty())
      throw DataError("swap_audio: needs at least two distinct videos");
    const std::size_t pick =
        donors[static_cast<std::size_t>(rng.uniform_index(donors.size()))];
    out[i].audio = corpus[pick].audio;
    std::fill(out[i].track.labels.begin(), out[i].track.labels.end(), 0);
  }
  return out;
}

Waveform shift_audio(const Waveform& audio, double delay_s) {
  if (delay_s < 0) throw DataError("shift_audio: negative delay");
  if (delay_s > audio.duration_s())
    throw DataError("shift_audio: delay exceeds track duration");
  const std::size_t shift = static_cast<std::size_t>(
      std::llround(delay_s * audio.sample_rate));
  Waveform out;
  out.sample_rate = audio.sample_rate;
  out.samples.assign(audio.samples.size(), 0.0);
  for (std::size_t i = shift; i < out.samples.size(); ++i)
    out.samples[i] = audio.samples[i - shift];
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["protocol"] = protocol;
  j["metrics"] = metrics;
  j["counts"] = counts;
  j["config"] = config_echo;
  return j;
}

void EvalReport::write(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write report: " + path);
  out << to_json().dump(2) << "\n";
}

namespace {

struct Scored {
  std::vector<FramePredictions> preds;
  std::vector<std::vector<std::uint8_t>> labels;
  std::vector<double> scores;           // flattened probs_av[:,1]
  std::vector<std::uint8_t> flat_labels;
};

Scored run_inference(AsdModel& model, const std::vector<TrackData>& corpus,
                     const EvalProtocolConfig& cfg) {
  Scored s;
  for (const TrackData& d : corpus) {
    MelSpectrogram mel = compute_mel(d.audio, d.track, cfg.n_mels);
    const LipTrack* lips = cfg.with_lte ? &d.lips : nullptr;
    FramePredictions p = model.predict(d.track, mel, lips);
    for (std::int64_t f = 0; f < p.length(); ++f) {
      s.scores.push_back(p.probs_av[f * 2 + 1]);
      s.flat_labels.push_back(d.track.labels[static_cast<std::size_t>(f)]);
    }
    s.labels.push_back(d.track.labels);
    s.preds.push_back(std::move(p));
  }
  return s;
}

}  // namespace

EvalReport evaluate(AsdModel& model, const std::vector<TrackData>& corpus,
                    const EvalProtocolConfig& cfg) {
  cfg.validate();
  EvalReport report;
  report.protocol = cfg.protocol;
  report.config_echo = {{"protocol", cfg.protocol},
                        {"delays", cfg.delays},
                        {"rms_threshold", cfg.rms_threshold},
                        {"with_lte", cfg.with_lte},
                        {"seed", cfg.seed},
                        {"n_mels", cfg.n_mels}};
  report.counts["tracks"] = static_cast<std::int64_t>(corpus.size());
  std::int64_t frames = 0;
  for (const auto& d : corpus) frames += d.track.length();
  report.counts["frames"] = frames;

  if (cfg.protocol == "standard") {
    Scored s = run_inference(model, corpus, cfg);
    report.metrics["map"] = mean_average_precision(s.scores, s.flat_labels);
    report.metrics["accuracy"] = per_frame_accuracy(s.preds, s.labels);
  } else if (cfg.protocol == "swap") {
    Rng rng(cfg.seed);
    std::vector<TrackData> swapped = swap_audio(corpus, rng);
    Scored s = run_inference(model, swapped, cfg);
    report.metrics["accuracy"] = per_frame_accuracy(s.preds, s.labels);
  } else if (cfg.protocol == "shift") {
    for (double d : cfg.delays) {
      std::vector<TrackData> shifted = corpus;
      for (auto& td : shifted) {
        td.audio = shift_audio(td.audio, d);
        std::fill(td.track.labels.begin(), td.track.labels.end(), 0);
      }
      Scored s = run_inference(model, shifted, cfg);
      char key[48];
      std::snprintf(key, sizeof(key), "accuracy_delay_%.3f", d);
      report.metrics[key] = per_frame_accuracy(s.preds, s.labels);
    }
  } else {  // noise_split
    std::vector<std::pair<std::string, std::optional<double>>> rms;
    for (const auto& d : corpus) {
      VadSegments seg = energy_vad(d.audio, cfg.vad_frame_ms, cfg.vad_threshold);
      rms.emplace_back(d.track.track_id, background_rms(d.audio, seg));
    }
    NoiseSplit split = noise_split(rms, cfg.rms_threshold);
    auto subset_metric = [&](const std::vector<std::string>& ids,
                             const std::string& suffix) {
      if (ids.empty()) return;
      std::vector<TrackData> sub;
      for (const auto& d : corpus)
        if (std::find(ids.begin(), ids.end(), d.track.track_id) != ids.end())
          sub.push_back(d);
      Scored s = run_inference(model, sub, cfg);
      report.counts["tracks_" + suffix] = static_cast<std::int64_t>(sub.size());
      bool has_pos = false;
      for (auto l : s.flat_labels) has_pos |= (l != 0);
      if (has_pos)
        report.metrics["map_" + suffix] =
            mean_average_precision(s.scores, s.flat_labels);
      report.metrics["accuracy_" + suffix] = per_frame_accuracy(s.preds, s.labels);
    };
    subset_metric(split.low, "low");
    subset_metric(split.high, "high");
    report.counts["tracks_undetermined"] =
        static_cast<std::int64_t>(split.undetermined.size());
  }
  return report;
}

}  // namespace laser
