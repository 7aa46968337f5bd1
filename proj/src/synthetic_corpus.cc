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

#include "laser/synthetic_corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "laser/common.h"

namespace laser {

namespace {
constexpr double kTau = 2.0 * 3.14159265358979323846;
constexpr double kFreqLo = 2.0;   // Hz, mouth/envelope oscillation band
constexpr double kFreqHi = 8.0;
constexpr double kFreqSep = 2.5;  // Hz, speaking vs non-speaking separation
}  // namespace

void SynthConfig::validate() const {
  if (num_tracks < 0) throw ConfigError("synth: num_tracks < 0");
  if (t_min < 1 || t_max < t_min) throw ConfigError("synth: bad T range");
  if (fps <= 0) throw ConfigError("synth: fps must be positive");
  if (crop_size < 16) throw ConfigError("synth: crop_size too small");
  if (speaking_fraction < 0 || speaking_fraction > 1)
    throw ConfigError("synth: speaking_fraction outside [0,1]");
  if (noise_rms.empty()) throw ConfigError("synth: empty noise_rms list");
  for (double r : noise_rms)
    if (r < 0) throw ConfigError("synth: negative noise_rms");
  if (landmark_count < 4) throw ConfigError("synth: landmark_count too small");
  if (sample_rate < 1000) throw ConfigError("synth: sample_rate too small");
  if (tracks_per_video < 1) throw ConfigError("synth: tracks_per_video < 1");
}

SynthTrack generate_track(const SynthConfig& cfg, Rng& rng, double noise_rms) {
  const int t =
      cfg.t_min + static_cast<int>(rng.uniform_index(
                      static_cast<std::uint64_t>(cfg.t_max - cfg.t_min + 1)));
  const double s = static_cast<double>(cfg.crop_size);

  // Label runs with per-run oscillation frequencies.
  struct Run {
    int begin, end;
    bool speaking;
    double f_env, phi_env;  // envelope
    double f_ap, phi_ap;    // aperture when not speaking
  };
  std::vector<Run> runs;
  int pos = 0;
  while (pos < t) {
    Run r;
    r.begin = pos;
    r.end = std::min<int>(t, pos + 12 + static_cast<int>(rng.uniform_index(9)));
    r.speaking = rng.bernoulli(cfg.speaking_fraction);
    r.f_env = rng.uniform(kFreqLo, kFreqHi);
    r.phi_env = rng.uniform(0.0, kTau);
    do {
      r.f_ap = rng.uniform(kFreqLo, kFreqHi);
    } while (std::abs(r.f_ap - r.f_env) < kFreqSep);
    r.phi_ap = rng.uniform(0.0, kTau);
    runs.push_back(r);
    pos = r.end;
  }

  // Optional silence gap: the tone stops, nobody speaks, mouth nearly shut.
  int gap_begin = -1, gap_end = -1;
  if (rng.bernoulli(cfg.silence_gap_prob)) {
    const int len = 5 + static_cast<int>(rng.uniform_index(6));
    if (len < t) {
      gap_begin = static_cast<int>(
          rng.uniform_index(static_cast<std::uint64_t>(t - len + 1)));
      gap_end = gap_begin + len;
    }
  }

  SynthTrack out;
  out.noise_rms = noise_rms;
  out.envelope.resize(static_cast<std::size_t>(t));
  out.aperture.resize(static_cast<std::size_t>(t));
  out.track.fps = cfg.fps;
  out.track.labels.resize(static_cast<std::size_t>(t));
  // Syllable-like on/off processes: the envelope and the mouth aperture are
  // square waves (loud/quiet, open/shut). On speaking runs the aperture
  // follows the envelope; otherwise it toggles at a well-separated rate.
  for (const Run& r : runs) {
    for (int f = r.begin; f < r.end; ++f) {
      const double tt = static_cast<double>(f) / cfg.fps;
      const double env =
          std::sin(kTau * r.f_env * tt + r.phi_env) > 0.0 ? 0.9 : 0.1;
      double ap;
      if (r.speaking) {
        ap = std::clamp(env + rng.normal(0.0, 0.02), 0.02, 1.0);
      } else {
        const double own =
            std::sin(kTau * r.f_ap * tt + r.phi_ap) > 0.0 ? 0.9 : 0.1;
        ap = std::clamp(own + rng.normal(0.0, 0.02), 0.02, 1.0);
      }
      out.envelope[static_cast<std::size_t>(f)] = env;
      out.aperture[static_cast<std::size_t>(f)] = ap;
      out.track.labels[static_cast<std::size_t>(f)] = r.speaking ? 1 : 0;
    }
  }
  for (int f = gap_begin; f >= 0 && f < gap_end; ++f) {
    out.envelope[static_cast<std::size_t>(f)] = 0.0;
    out.aperture[static_cast<std::size_t>(f)] =
        std::clamp(0.03 + rng.normal(0.0, 0.01), 0.0, 1.0);
    out.track.labels[static_cast<std::size_t>(f)] = 0;
  }

  // Face geometry. The mouth is large and high-contrast so the aperture
  // stays resolvable at small crop sizes.
  const double cx = s * (0.5 + rng.uniform(-0.03, 0.03));
  const double cy = s * (0.5 + rng.uniform(-0.03, 0.03));
  const double face_r = s * rng.uniform(0.38, 0.44);
  const double face_val = rng.uniform(0.70, 0.80);
  const double bg_val = rng.uniform(0.25, 0.35);
  const double mx = cx;
  const double my = cy + 0.16 * s;
  const double mouth_rx = s * rng.uniform(0.14, 0.17);
  const double eye_dx = 0.15 * s, eye_dy = 0.17 * s, eye_r = 0.05 * s;

  // Mouth occlusion episodes: a face-colored blob hides the mouth pixels for
  // a stretch of frames while the landmark coordinates stay valid, the same
  // asymmetry a landmark detector with temporal tracking provides on real
  // video. This is where lip guidance genuinely outruns raw pixels.
  std::vector<std::uint8_t> occluded(static_cast<std::size_t>(t), 0);
  if (rng.bernoulli(0.45)) {
    const int n_ep = 1;
    for (int ep = 0; ep < n_ep; ++ep) {
      const int len = 4 + static_cast<int>(rng.uniform_index(4));
      if (len >= t) continue;
      const int begin = static_cast<int>(
          rng.uniform_index(static_cast<std::uint64_t>(t - len + 1)));
      for (int f = begin; f < begin + len && f < t; ++f)
        occluded[static_cast<std::size_t>(f)] = 1;
    }
  }
  out.track.frames = Tensor({t, cfg.crop_size, cfg.crop_size});
  out.lips.landmark_count = cfg.landmark_count;
  out.lips.frames.resize(static_cast<std::size_t>(t));
  const double mouth_val = face_val - rng.uniform(0.28, 0.38);
  const double occ_val = face_val + rng.uniform(-0.05, 0.05);
  for (int f = 0; f < t; ++f) {
    const double ap = out.aperture[static_cast<std::size_t>(f)];
    const double ry = (0.02 + 0.14 * ap) * s;
    // Per-frame nuisance dynamics the landmark coordinates are immune to:
    // global gain flicker and independent eye-size changes.
    const double gain = rng.uniform(0.88, 1.12);
    const double eye_scale = rng.uniform(0.7, 1.3);
    const double er = eye_r * eye_scale;
    const bool occ = occluded[static_cast<std::size_t>(f)] != 0;
    const double ox = mx + rng.uniform(-1.5, 1.5);
    const double oy = my + rng.uniform(-1.5, 1.5);
    const double orx = 0.24 * s, ory = 0.19 * s;
    double* img = out.track.frames.data() +
                  static_cast<std::int64_t>(f) * cfg.crop_size * cfg.crop_size;
    for (int x = 0; x < cfg.crop_size; ++x)
      for (int y = 0; y < cfg.crop_size; ++y) {
        const double dx = x - cx, dy = y - cy;
        double v = bg_val;
        if (dx * dx + dy * dy < face_r * face_r) {
          v = face_val;
          const double ex1 = x - (cx - eye_dx), ex2 = x - (cx + eye_dx);
          const double ey = y - (cy - eye_dy);
          if (ex1 * ex1 + ey * ey < er * er || ex2 * ex2 + ey * ey < er * er)
            v = 0.2;
          const double mu = (x - mx) / mouth_rx, mv = (y - my) / ry;
          if (mu * mu + mv * mv <= 1.0) v = mouth_val;
        }
        if (occ) {
          const double ou = (x - ox) / orx, ov = (y - oy) / ory;
          if (ou * ou + ov * ov <= 1.0) v = occ_val;
        }
        v = v * gain + rng.normal(0.0, 0.05);
        img[x * cfg.crop_size + y] = std::clamp(v, 0.0, 1.0);
      }
    if (occ) {
      // A detector cannot see the covered mouth: no landmarks that frame.
      out.lips.frames[static_cast<std::size_t>(f)] = std::nullopt;
    } else {
      LandmarkSet pts;
      pts.reserve(static_cast<std::size_t>(cfg.landmark_count));
      for (int j = 0; j < cfg.landmark_count; ++j) {
        const double th = kTau * j / cfg.landmark_count;
        pts.push_back(
            {static_cast<int>(std::lround(mx + mouth_rx * std::cos(th))),
             static_cast<int>(std::lround(my + ry * std::sin(th)))});
      }
      out.lips.frames[static_cast<std::size_t>(f)] = std::move(pts);
    }
  }

  // Audio: a two-harmonic tone amplitude-modulated by the envelope, plus
  // white noise at the configured RMS.
  const double f0 = rng.uniform(140.0, 280.0);
  const std::int64_t n_samples = static_cast<std::int64_t>(
      std::llround(static_cast<double>(t) / cfg.fps * cfg.sample_rate));
  out.audio.sample_rate = cfg.sample_rate;
  out.audio.samples.resize(static_cast<std::size_t>(n_samples));
  const double spf = static_cast<double>(cfg.sample_rate) / cfg.fps;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const double fpos = static_cast<double>(i) / spf;
    const int f_lo = std::min<int>(t - 1, static_cast<int>(fpos));
    const int f_hi = std::min<int>(t - 1, f_lo + 1);
    const double frac = fpos - f_lo;
    const double env = (1.0 - frac) * out.envelope[static_cast<std::size_t>(f_lo)] +
                       frac * out.envelope[static_cast<std::size_t>(f_hi)];
    const double ts = static_cast<double>(i) / cfg.sample_rate;
    const double tone = 0.7 * std::sin(kTau * f0 * ts) +
                        0.3 * std::sin(kTau * 2.0 * f0 * ts);
    out.audio.samples[static_cast<std::size_t>(i)] =
        0.32 * env * tone + rng.normal(0.0, noise_rms);
  }
  return out;
}

std::vector<SynthTrack> generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  Rng base(cfg.seed);
  std::vector<SynthTrack> tracks;
  tracks.reserve(static_cast<std::size_t>(cfg.num_tracks));
  char idbuf[32];
  for (int i = 0; i < cfg.num_tracks; ++i) {
    Rng rng = base.fork(static_cast<std::uint64_t>(i) + 1);
    const double rms =
        cfg.noise_rms[static_cast<std::size_t>(i) % cfg.noise_rms.size()];
    SynthTrack t = generate_track(cfg, rng, rms);
    std::snprintf(idbuf, sizeof(idbuf), "trk_%04d", i);
    t.track.track_id = idbuf;
    std::snprintf(idbuf, sizeof(idbuf), "vid_%03d", i / cfg.tracks_per_video);
    t.track.video_id = idbuf;
    t.track.start_time = 0.0;
    tracks.push_back(std::move(t));
  }
  return tracks;
}

LipTrack degrade_landmarks(const LipTrack& lips, double drop_rate, Rng& rng,
                           bool whole_tracks) {
  if (drop_rate < 0 || drop_rate > 1)
    throw ConfigError("degrade_landmarks: drop_rate outside [0,1]");
  LipTrack out = lips;
  if (whole_tracks) {
    if (rng.bernoulli(drop_rate))
      for (auto& f : out.frames) f = std::nullopt;
  } else {
    for (auto& f : out.frames)
      if (rng.bernoulli(drop_rate)) f = std::nullopt;
  }
  return out;
}

void write_corpus(const std::vector<SynthTrack>& tracks,
                  const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "frames");
  fs::create_directories(fs::path(dir) / "audio");
  CorpusManifest manifest;
  nlohmann::json meta;
  for (const auto& t : tracks) {
    const std::string frames_rel = "frames/" + t.track.track_id + ".lsrt";
    const std::string audio_rel = "audio/" + t.track.track_id + ".wav";
    write_lsrt((fs::path(dir) / frames_rel).string(), t.track.frames);
    write_wav((fs::path(dir) / audio_rel).string(), t.audio);
    ManifestEntry e;
    e.track_id = t.track.track_id;
    e.video_id = t.track.video_id;
    e.fps = t.track.fps;
    e.frames_path = (fs::path(dir) / frames_rel).string();
    e.audio_path = (fs::path(dir) / audio_rel).string();
    e.labels = t.track.labels;
    e.landmarks = t.lips.frames;
    e.start_time = t.track.start_time;
    e.crop_size = t.track.crop_size();
    manifest.entries.push_back(std::move(e));
    meta[t.track.track_id] = {{"noise_rms", t.noise_rms}};
  }
  save_manifest(manifest, (fs::path(dir) / "manifest.jsonl").string());
  std::ofstream m((fs::path(dir) / "synth_meta.json").string(),
                  std::ios::trunc);
  m << meta.dump(2) << "\n";
}

std::vector<TrackData> to_track_data(const std::vector<SynthTrack>& tracks) {
  std::vector<TrackData> out;
  out.reserve(tracks.size());
  for (const auto& t : tracks) out.push_back({t.track, t.lips, t.audio});
  return out;
}

}  // namespace laser
