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

#include "laser/core_data.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "laser/common.h"

namespace laser {

using nlohmann::json;

void FaceTrack::validate() const {
  if (!frames.defined() || frames.ndim() != 3)
    throw DataError("track " + track_id + ": frames must be [T,H,W]");
  if (length() < 1) throw DataError("track " + track_id + ": T must be >= 1");
  if (frames.dim(1) != frames.dim(2))
    throw DataError("track " + track_id + ": crops must be square");
  if (fps <= 0) throw DataError("track " + track_id + ": fps must be positive");
  if (static_cast<std::int64_t>(labels.size()) != length())
    throw DataError("track " + track_id + ": labels length " +
                    std::to_string(labels.size()) + " != T " +
                    std::to_string(length()));
  for (std::int64_t i = 0; i < frames.numel(); ++i)
    if (!(frames[i] >= 0.0 && frames[i] <= 1.0))
      throw DataError("track " + track_id + ": pixel outside [0,1]");
}

bool LipTrack::all_absent() const {
  for (const auto& f : frames)
    if (f.has_value()) return false;
  return true;
}

void LipTrack::validate(std::int64_t track_len) const {
  if (length() != track_len)
    throw DataError("lip track length " + std::to_string(length()) +
                    " != face track length " + std::to_string(track_len));
  for (const auto& f : frames)
    if (f.has_value() &&
        static_cast<int>(f->size()) != landmark_count)
      throw DataError("lip frame has " + std::to_string(f->size()) +
                      " landmarks, expected " + std::to_string(landmark_count));
}

void FramePredictions::validate(double tol) const {
  const Tensor* all[3] = {&probs_av, &probs_v, &probs_a};
  for (const Tensor* t : all) {
    if (!t->defined() || t->ndim() != 2 || t->dim(1) != 2 ||
        t->dim(0) != length())
      throw DataError("predictions: each head must be [T,2]");
    for (std::int64_t r = 0; r < t->dim(0); ++r) {
      const double a = (*t)[r * 2], b = (*t)[r * 2 + 1];
      if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0)
        throw DataError("predictions: probability outside [0,1]");
      if (std::abs(a + b - 1.0) > tol)
        throw DataError("predictions: row does not sum to 1");
    }
  }
}

const ManifestEntry& CorpusManifest::find(const std::string& track_id) const {
  for (const auto& e : entries)
    if (e.track_id == track_id) return e;
  throw DataError("manifest: no such track: " + track_id);
}

namespace {

std::vector<std::optional<LandmarkSet>> parse_landmarks(const json& j,
                                                        std::size_t expect_len,
                                                        const std::string& id) {
  std::vector<std::optional<LandmarkSet>> out;
  if (j.is_null()) {
    out.assign(expect_len, std::nullopt);
    return out;
  }
  if (!j.is_array())
    throw DataError("track " + id + ": landmarks must be an array or null");
  out.reserve(j.size());
  for (const auto& fr : j) {
    if (fr.is_null()) {
      out.emplace_back(std::nullopt);
      continue;
    }
    LandmarkSet pts;
    pts.reserve(fr.size());
    for (const auto& p : fr) {
      if (!p.is_array() || p.size() != 2)
        throw DataError("track " + id + ": landmark must be an [x,y] pair");
      pts.push_back({p[0].get<int>(), p[1].get<int>()});
    }
    out.emplace_back(std::move(pts));
  }
  return out;
}

// Reads only the 16-byte LSRT header.
void read_lsrt_header(const std::string& path, std::int64_t* t,
                      std::int64_t* h, std::int64_t* w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open frame file: " + path);
  char hdr[16];
  in.read(hdr, 16);
  if (!in || std::string(hdr, 4) != "LSRT")
    throw DataError("bad frame file header: " + path);
  auto u32 = [&](int off) {
    return static_cast<std::int64_t>(
        static_cast<unsigned char>(hdr[off]) |
        (static_cast<unsigned char>(hdr[off + 1]) << 8) |
        (static_cast<unsigned char>(hdr[off + 2]) << 16) |
        (static_cast<std::uint32_t>(static_cast<unsigned char>(hdr[off + 3]))
         << 24));
  };
  *t = u32(4);
  *h = u32(8);
  *w = u32(12);
}

}  // namespace

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  CorpusManifest m;
  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw DataError("manifest line " + std::to_string(lineno) +
                      ": malformed JSON: " + e.what());
    }
    ManifestEntry e;
    try {
      e.track_id = j.at("track_id").get<std::string>();
      e.video_id = j.at("video_id").get<std::string>();
      e.fps = j.at("fps").get<double>();
      e.frames_path = j.at("frames").get<std::string>();
      e.audio_path = j.at("audio").get<std::string>();
      for (const auto& v : j.at("labels"))
        e.labels.push_back(v.get<int>() ? 1 : 0);
      e.start_time = j.at("start_time").get<double>();
      e.landmarks = parse_landmarks(j.at("landmarks"), e.labels.size(),
                                    e.track_id);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& ex) {
      throw DataError("manifest line " + std::to_string(lineno) +
                      ": malformed record: " + ex.what());
    }
    if (!seen_ids.insert(e.track_id).second)
      throw DataError("manifest: duplicate track_id " + e.track_id);
    // Paths are relative to the manifest location.
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    e.frames_path = resolve(e.frames_path);
    e.audio_path = resolve(e.audio_path);
    if (!std::filesystem::exists(e.frames_path))
      throw DataError("track " + e.track_id +
                      ": missing frame file " + e.frames_path);
    if (!std::filesystem::exists(e.audio_path))
      throw DataError("track " + e.track_id + ": missing audio file " +
                      e.audio_path);
    std::int64_t t, h, w;
    read_lsrt_header(e.frames_path, &t, &h, &w);
    if (h != w)
      throw DataError("track " + e.track_id + ": crops must be square");
    if (static_cast<std::int64_t>(e.labels.size()) != t)
      throw DataError("track " + e.track_id + ": labels length " +
                      std::to_string(e.labels.size()) + " != T " +
                      std::to_string(t));
    if (static_cast<std::int64_t>(e.landmarks.size()) != t)
      throw DataError("track " + e.track_id + ": landmarks length " +
                      std::to_string(e.landmarks.size()) + " != T " +
                      std::to_string(t));
    e.crop_size = h;
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const CorpusManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  for (const auto& e : m.entries) {
    json j;
    j["track_id"] = e.track_id;
    j["video_id"] = e.video_id;
    j["fps"] = e.fps;
    auto relativize = [&](const std::string& p) {
      std::filesystem::path fp(p);
      auto rel = std::filesystem::relative(fp, base.empty() ? "." : base);
      return rel.string();
    };
    j["frames"] = relativize(e.frames_path);
    j["audio"] = relativize(e.audio_path);
    json labels = json::array();
    for (auto v : e.labels) labels.push_back(static_cast<int>(v));
    j["labels"] = labels;
    json lms = json::array();
    for (const auto& fr : e.landmarks) {
      if (!fr.has_value()) {
        lms.push_back(nullptr);
      } else {
        json pts = json::array();
        for (const auto& p : *fr) pts.push_back({p[0], p[1]});
        lms.push_back(pts);
      }
    }
    j["landmarks"] = lms;
    j["start_time"] = e.start_time;
    out << j.dump() << "\n";
  }
}

TrackData load_track(const ManifestEntry& entry, int landmark_count) {
  TrackData d;
  d.track.track_id = entry.track_id;
  d.track.video_id = entry.video_id;
  d.track.fps = entry.fps;
  d.track.start_time = entry.start_time;
  d.track.frames = read_lsrt(entry.frames_path);
  d.track.labels = entry.labels;
  d.track.validate();
  d.lips.landmark_count = landmark_count;
  d.lips.frames = entry.landmarks;
  d.lips.validate(d.track.length());
  d.audio = read_wav(entry.audio_path);
  return d;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Tensor mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int n_bins = n_fft / 2 + 1;
  const double f_max = sample_rate / 2.0;
  const double m_lo = hz_to_mel(0.0), m_hi = hz_to_mel(f_max);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] =
        mel_to_hz(m_lo + (m_hi - m_lo) * i / (n_mels + 1));
  Tensor fb({n_mels, n_bins});
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double c = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f < c)
        w = (f - lo) / (c - lo);
      else if (f >= c && f < hi)
        w = (hi - f) / (hi - c);
      fb[static_cast<std::int64_t>(m) * n_bins + b] = w;
    }
  }
  return fb;
}

namespace {

// Iterative radix-2 FFT, n a power of two.
void fft_pow2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace

MelSpectrogram compute_mel(const Waveform& audio, const FaceTrack& track,
                           int n_mels) {
  if (audio.sample_rate <= 0)
    throw DataError("compute_mel: non-positive sample rate");
  const std::int64_t t = track.length();
  const double span = static_cast<double>(t) / track.fps;
  if (audio.duration_s() < span / 2.0)
    throw DataError("compute_mel: audio (" + std::to_string(audio.duration_s()) +
                    " s) shorter than half the track span (" +
                    std::to_string(span) + " s) for track " + track.track_id);
  const std::int64_t hop = static_cast<std::int64_t>(
      std::llround(audio.sample_rate / (4.0 * track.fps)));
  if (hop < 1) throw DataError("compute_mel: hop underflow");
  const std::int64_t win = 2 * hop;
  const std::size_t n_fft = next_pow2(static_cast<std::size_t>(win));
  const int n_bins = static_cast<int>(n_fft) / 2 + 1;
  const Tensor fb = mel_filterbank(n_mels, static_cast<int>(n_fft),
                                   audio.sample_rate);
  // Hann window.
  std::vector<double> hann(static_cast<std::size_t>(win));
  for (std::int64_t i = 0; i < win; ++i)
    hann[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / (win - 1));

  const std::int64_t rows = 4 * t;
  MelSpectrogram mel;
  mel.sample_rate = audio.sample_rate;
  mel.n_mels = n_mels;
  mel.values = Tensor({rows, n_mels});
  const std::int64_t n_samples = static_cast<std::int64_t>(audio.samples.size());
  std::vector<std::complex<double>> buf(n_fft);
  std::vector<double> power(static_cast<std::size_t>(n_bins));
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t s0 = r * hop;
    if (s0 >= n_samples) continue;  // zero row past the audio end
    for (std::size_t i = 0; i < n_fft; ++i) buf[i] = 0.0;
    for (std::int64_t i = 0; i < win; ++i) {
      const std::int64_t s = s0 + i;
      if (s < n_samples)
        buf[static_cast<std::size_t>(i)] =
            audio.samples[static_cast<std::size_t>(s)] *
            hann[static_cast<std::size_t>(i)];
    }
    fft_pow2(buf);
    for (int b = 0; b < n_bins; ++b)
      power[static_cast<std::size_t>(b)] = std::norm(buf[static_cast<std::size_t>(b)]);
    for (int m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      const double* w = fb.data() + static_cast<std::int64_t>(m) * n_bins;
      for (int b = 0; b < n_bins; ++b) acc += w[b] * power[static_cast<std::size_t>(b)];
      mel.values[r * n_mels + m] = std::log1p(acc);
    }
  }
  if (!mel.values.all_finite())
    throw NumericError("compute_mel: non-finite output");
  return mel;
}

void save_predictions(
    const std::vector<std::pair<std::string, FramePredictions>>& preds,
    const std::string& path) {
  std::vector<std::size_t> order(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].first < preds[b].first;
  });
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write predictions: " + path);
  out << "track_id,frame_index,score\n";
  char buf[64];
  for (std::size_t oi : order) {
    const auto& [id, p] = preds[oi];
    for (std::int64_t f = 0; f < p.length(); ++f) {
      std::snprintf(buf, sizeof(buf), "%.6f", p.probs_av[f * 2 + 1]);
      out << id << "," << f << "," << buf << "\n";
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

std::vector<std::pair<std::string, std::vector<double>>> load_predictions(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "track_id,frame_index,score")
    throw DataError("predictions: bad header in " + path);
  std::vector<std::pair<std::string, std::vector<double>>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw DataError("predictions: malformed row: " + line);
    const std::string id = line.substr(0, c1);
    const double score = std::stod(line.substr(c2 + 1));
    if (out.empty() || out.back().first != id) out.push_back({id, {}});
    out.back().second.push_back(score);
  }
  return out;
}

}  // namespace laser
