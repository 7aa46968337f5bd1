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

#include "laser/bench_curation.h"

#include <cmath>
#include <cstdio>

#include "laser/common.h"

namespace laser {

void CurationConfig::validate() const {
  if (min_track_seconds <= 0)
    throw ConfigError("curation: min_track_seconds must be positive");
  if (rms_threshold <= 0)
    throw ConfigError("curation: rms_threshold must be positive");
  if (vad_frame_ms <= 0)
    throw ConfigError("curation: vad_frame_ms must be positive");
}

void VadSegments::validate() const {
  double prev_end = -1.0;
  for (const auto& [start, end] : segments) {
    if (start < 0 || end <= start)
      throw DataError("vad: segment with start >= end or negative start");
    if (start < prev_end)
      throw DataError("vad: segments overlap or are unsorted");
    prev_end = end;
  }
}

double VadSegments::total_seconds() const {
  double s = 0.0;
  for (const auto& [a, b] : segments) s += b - a;
  return s;
}

VadSegments energy_vad(const Waveform& audio, double frame_ms,
                       double threshold) {
  if (frame_ms <= 0) throw ConfigError("energy_vad: frame_ms must be > 0");
  VadSegments out;
  if (audio.samples.empty()) return out;
  const std::size_t frame_len = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(frame_ms / 1000.0 * audio.sample_rate)));
  const std::size_t n_frames =
      (audio.samples.size() + frame_len - 1) / frame_len;
  bool in_speech = false;
  double seg_start = 0.0;
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t lo = f * frame_len;
    const std::size_t hi = std::min(audio.samples.size(), lo + frame_len);
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i)
      acc += audio.samples[i] * audio.samples[i];
    const double rms = std::sqrt(acc / static_cast<double>(hi - lo));
    const bool speech = rms > threshold;
    const double t0 = static_cast<double>(lo) / audio.sample_rate;
    const double t1 = static_cast<double>(hi) / audio.sample_rate;
    if (speech && !in_speech) {
      in_speech = true;
      seg_start = t0;
    } else if (!speech && in_speech) {
      in_speech = false;
      out.segments.emplace_back(seg_start, t0);
    }
    if (speech && f + 1 == n_frames) out.segments.emplace_back(seg_start, t1);
  }
  out.validate();
  return out;
}

VadSegments external_vad(const std::string& command,
                         const std::string& wav_path) {
  const std::string full = command + " " + wav_path;
  FILE* pipe = popen(full.c_str(), "r");
  if (!pipe) throw DataError("external_vad: cannot run: " + full);
  std::string output;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) output.append(buf, n);
  const int status = pclose(pipe);
  if (status != 0)
    throw DataError("external_vad: command failed with status " +
                    std::to_string(status) + ": " + full);
  VadSegments out;
  try {
    nlohmann::json j = nlohmann::json::parse(output);
    for (const auto& seg : j)
      out.segments.emplace_back(seg.at("start").get<double>(),
                                seg.at("end").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("external_vad: bad JSON output: ") + e.what());
  }
  out.validate();
  return out;
}

std::optional<double> background_rms(const Waveform& audio,
                                     const VadSegments& vad) {
  vad.validate();
  double acc = 0.0;
  std::int64_t kept = 0;
  std::size_t seg = 0;
  for (std::size_t i = 0; i < audio.samples.size(); ++i) {
    const double t = static_cast<double>(i) / audio.sample_rate;
    while (seg < vad.segments.size() && t >= vad.segments[seg].second) ++seg;
    const bool in_speech =
        seg < vad.segments.size() && t >= vad.segments[seg].first;
    if (in_speech) continue;
    acc += audio.samples[i] * audio.samples[i];
    ++kept;
  }
  const double kept_seconds =
      static_cast<double>(kept) / std::max(1, audio.sample_rate);
  if (kept_seconds < 0.1) return std::nullopt;
  return std::sqrt(acc / static_cast<double>(kept));
}

nlohmann::json NoiseSplit::to_json() const {
  return {{"low", low},
          {"high", high},
          {"undetermined", undetermined},
          {"threshold", threshold},
          {"normalization", "fullscale_pm1"}};
}

NoiseSplit noise_split(
    const std::vector<std::pair<std::string, std::optional<double>>>& clip_rms,
    double threshold) {
  NoiseSplit out;
  out.threshold = threshold;
  for (const auto& [id, rms] : clip_rms) {
    if (!rms.has_value())
      out.undetermined.push_back(id);
    else if (*rms < threshold)
      out.low.push_back(id);
    else
      out.high.push_back(id);
  }
  return out;
}

std::vector<CuratedTrack> filter_and_interpolate(
    const std::vector<RawTrack>& raw, const CurationConfig& cfg) {
  cfg.validate();
  std::vector<CuratedTrack> out;
  for (const RawTrack& rt : raw) {
    if (rt.detections.empty()) continue;
    for (std::size_t i = 1; i < rt.detections.size(); ++i)
      if (rt.detections[i].frame_offset <= rt.detections[i - 1].frame_offset)
        throw DataError("raw track " + rt.track_id +
                        ": detections not strictly ascending");
    const std::int64_t first = rt.detections.front().frame_offset;
    const std::int64_t last = rt.detections.back().frame_offset;
    const std::int64_t span = last - first + 1;
    const double seconds = static_cast<double>(span) / rt.fps;
    if (seconds < cfg.min_track_seconds) continue;  // >= keeps

    const std::int64_t s = rt.detections.front().crop.dim(0);
    CuratedTrack ct;
    ct.track.track_id = rt.track_id;
    ct.track.video_id = rt.video_id;
    ct.track.fps = rt.fps;
    ct.track.start_time =
        rt.start_time + static_cast<double>(first) / rt.fps;
    ct.track.frames = Tensor({span, s, s});
    ct.track.labels.resize(static_cast<std::size_t>(span));
    ct.lips.frames.resize(static_cast<std::size_t>(span));
    ct.boxes.resize(static_cast<std::size_t>(span));

    std::size_t det = 0;
    for (std::int64_t f = 0; f < span; ++f) {
      const std::int64_t off = first + f;
      while (det + 1 < rt.detections.size() &&
             rt.detections[det + 1].frame_offset <= off)
        ++det;
      const RawDetection& lo = rt.detections[det];
      if (lo.frame_offset == off) {
        std::copy(lo.crop.data(), lo.crop.data() + s * s,
                  ct.track.frames.data() + f * s * s);
        ct.track.labels[static_cast<std::size_t>(f)] = lo.label;
        ct.lips.frames[static_cast<std::size_t>(f)] = lo.landmarks;
        ct.boxes[static_cast<std::size_t>(f)] = lo.bbox;
        continue;
      }
      // Interior gap: pixels and label from the nearest detection, box
      // linearly interpolated, landmarks absent (nothing was detected).
      const RawDetection& hi = rt.detections[det + 1];
      const double alpha =
          static_cast<double>(off - lo.frame_offset) /
          static_cast<double>(hi.frame_offset - lo.frame_offset);
      const RawDetection& nearest = alpha <= 0.5 ? lo : hi;
      std::copy(nearest.crop.data(), nearest.crop.data() + s * s,
                ct.track.frames.data() + f * s * s);
      ct.track.labels[static_cast<std::size_t>(f)] = nearest.label;
      ct.lips.frames[static_cast<std::size_t>(f)] = std::nullopt;
      for (int b = 0; b < 4; ++b)
        ct.boxes[static_cast<std::size_t>(f)][static_cast<std::size_t>(b)] =
            (1.0 - alpha) * lo.bbox[static_cast<std::size_t>(b)] +
            alpha * hi.bbox[static_cast<std::size_t>(b)];
    }
    // Lip landmark count is unknown for all-absent tracks; keep the default.
    for (const auto& d : rt.detections)
      if (d.landmarks.has_value()) {
        ct.lips.landmark_count = static_cast<int>(d.landmarks->size());
        break;
      }
    out.push_back(std::move(ct));
  }
  return out;
}

}  // namespace laser
