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

#include "laser/lip_encoding.h"

#include <cmath>

#include "laser/common.h"

namespace laser {

Tensor EncodedLipMaps::to_dense() const {
  const std::int64_t t = length(), k = landmark_count;
  Tensor out({t, k, 2, width, height});
  const std::int64_t plane = width * height;
  for (std::int64_t f = 0; f < t; ++f) {
    const Frame& fr = frames[static_cast<std::size_t>(f)];
    if (!fr.present) continue;
    for (std::int64_t i = 0; i < k; ++i) {
      const auto& p = fr.points[static_cast<std::size_t>(i)];
      if (!in_bounds(p)) continue;
      const std::int64_t pix = static_cast<std::int64_t>(p[0]) * height + p[1];
      out[((f * k + i) * 2 + 0) * plane + pix] =
          static_cast<double>(p[0]) / static_cast<double>(width);
      out[((f * k + i) * 2 + 1) * plane + pix] =
          static_cast<double>(p[1]) / static_cast<double>(height);
    }
  }
  return out;
}

LipAggregator LipAggregator::uniform(int s, int k) {
  LipAggregator a;
  a.weights_x = Tensor({s, k}, 1.0 / k);
  a.weights_y = Tensor({s, k}, 1.0 / k);
  return a;
}

LipAggregator LipAggregator::random(int s, int k, Rng& rng) {
  LipAggregator a;
  a.weights_x = Tensor({s, k});
  a.weights_y = Tensor({s, k});
  const double sd = 1.0 / std::sqrt(static_cast<double>(k));
  for (std::int64_t i = 0; i < a.weights_x.numel(); ++i)
    a.weights_x[i] = rng.normal(0.0, sd);
  for (std::int64_t i = 0; i < a.weights_y.numel(); ++i)
    a.weights_y[i] = rng.normal(0.0, sd);
  return a;
}

void LipAggregator::validate() const {
  if (!weights_x.same_shape(weights_y))
    throw NumericError("aggregator: weight shapes differ");
  if (!weights_x.all_finite() || !weights_y.all_finite())
    throw NumericError("aggregator: non-finite weights");
}

EncodedLipMaps encode_lip_landmarks(const LipTrack& lips, std::int64_t width,
                                    std::int64_t height) {
  if (width < 1 || height < 1)
    throw NumericError("encode_lip_landmarks: grid must be at least 1x1");
  EncodedLipMaps maps;
  maps.width = width;
  maps.height = height;
  maps.landmark_count = lips.landmark_count;
  maps.frames.resize(lips.frames.size());
  for (std::size_t f = 0; f < lips.frames.size(); ++f) {
    const auto& src = lips.frames[f];
    if (!src.has_value()) continue;
    if (static_cast<int>(src->size()) != lips.landmark_count)
      throw DataError("encode_lip_landmarks: frame has " +
                      std::to_string(src->size()) + " landmarks, expected " +
                      std::to_string(lips.landmark_count));
    maps.frames[f].present = true;
    maps.frames[f].points = *src;
  }
  return maps;
}

namespace {

// Scatters one frame of aggregated planes: plane(s, c) += w_c[s,k] * v_c(k)
// at pixel (x_k, y_k). Channel (s, c) sits at offset 2s + c, which serves
// both the [S, 2, W, H] and the interleaved [2S, W, H] layouts.
void scatter_frame(const EncodedLipMaps& maps, std::int64_t f,
                   const Tensor& wx, const Tensor& wy, double* out) {
  const auto& fr = maps.frames[static_cast<std::size_t>(f)];
  if (!fr.present) return;
  const std::int64_t s = wx.dim(0), k = wx.dim(1);
  const std::int64_t plane = maps.width * maps.height;
  for (std::int64_t i = 0; i < k; ++i) {
    const auto& p = fr.points[static_cast<std::size_t>(i)];
    if (!maps.in_bounds(p)) continue;
    const std::int64_t pix = static_cast<std::int64_t>(p[0]) * maps.height + p[1];
    const double vx = static_cast<double>(p[0]) / static_cast<double>(maps.width);
    const double vy = static_cast<double>(p[1]) / static_cast<double>(maps.height);
    for (std::int64_t si = 0; si < s; ++si) {
      out[(2 * si) * plane + pix] += wx[si * k + i] * vx;
      out[(2 * si + 1) * plane + pix] += wy[si * k + i] * vy;
    }
  }
}

}  // namespace

AggregatedLipMaps aggregate(const EncodedLipMaps& maps,
                            const LipAggregator& agg) {
  agg.validate();
  if (agg.k() != maps.landmark_count)
    throw NumericError("aggregate: K mismatch (" + std::to_string(agg.k()) +
                       " vs " + std::to_string(maps.landmark_count) + ")");
  const std::int64_t t = maps.length(), s = agg.s();
  AggregatedLipMaps out;
  out.aggregated_channels = s;
  out.values = Tensor({t, s, 2, maps.width, maps.height});
  const std::int64_t frame_sz = s * 2 * maps.width * maps.height;
  for (std::int64_t f = 0; f < t; ++f)
    scatter_frame(maps, f, agg.weights_x, agg.weights_y,
                  out.values.data() + f * frame_sz);
  return out;
}

ag::Value aggregate_lip_graph(const EncodedLipMaps& maps, const ag::Value& wx,
                              const ag::Value& wy) {
  const std::int64_t t = maps.length();
  const std::int64_t s = wx.val().dim(0), k = wx.val().dim(1);
  if (k != maps.landmark_count)
    throw NumericError("aggregate_lip_graph: K mismatch");
  Tensor out({t, 2 * s, maps.width, maps.height});
  const std::int64_t frame_sz = 2 * s * maps.width * maps.height;
  for (std::int64_t f = 0; f < t; ++f)
    scatter_frame(maps, f, wx.val(), wy.val(), out.data() + f * frame_sz);
  // Keep a copy of the sparse structure for the backward scatter.
  EncodedLipMaps sparse = maps;
  return ag::make_custom(
      std::move(out), {wx, wy},
      [sparse = std::move(sparse), t, s, k, frame_sz](ag::Node& n) {
        const Tensor& g = n.grad;
        const std::int64_t plane = sparse.width * sparse.height;
        for (int which = 0; which < 2; ++which) {
          if (!n.parents[static_cast<std::size_t>(which)]->requires_grad)
            continue;
          Tensor& pw =
              n.parents[static_cast<std::size_t>(which)]->ensure_grad();
          for (std::int64_t f = 0; f < t; ++f) {
            const auto& fr = sparse.frames[static_cast<std::size_t>(f)];
            if (!fr.present) continue;
            for (std::int64_t i = 0; i < k; ++i) {
              const auto& p = fr.points[static_cast<std::size_t>(i)];
              if (!sparse.in_bounds(p)) continue;
              const std::int64_t pix =
                  static_cast<std::int64_t>(p[0]) * sparse.height + p[1];
              const double v =
                  which == 0
                      ? static_cast<double>(p[0]) / static_cast<double>(sparse.width)
                      : static_cast<double>(p[1]) / static_cast<double>(sparse.height);
              for (std::int64_t si = 0; si < s; ++si) {
                const std::int64_t ch = 2 * si + which;
                pw[si * k + i] += g[f * frame_sz + ch * plane + pix] * v;
              }
            }
          }
        }
      });
}

LipTrack rescale_lip_track(const LipTrack& lips, std::int64_t from_size,
                           std::int64_t to_size) {
  if (from_size < 1 || to_size < 1)
    throw NumericError("rescale_lip_track: bad sizes");
  LipTrack out;
  out.landmark_count = lips.landmark_count;
  out.frames.reserve(lips.frames.size());
  for (const auto& fr : lips.frames) {
    if (!fr.has_value()) {
      out.frames.emplace_back(std::nullopt);
      continue;
    }
    LandmarkSet pts;
    pts.reserve(fr->size());
    for (const auto& p : *fr) {
      const auto sc = [&](int v) {
        return static_cast<int>(std::floor(static_cast<double>(v) * to_size /
                                           from_size));
      };
      pts.push_back({sc(p[0]), sc(p[1])});
    }
    out.frames.emplace_back(std::move(pts));
  }
  return out;
}

ag::Value landmark_gather(const ag::Value& features, const LipTrack& lips,
                          std::int64_t crop_size) {
  const Tensor& fv = features.val();
  if (fv.ndim() != 4) throw NumericError("landmark_gather: want [T,C,G,G]");
  const std::int64_t t = fv.dim(0), c = fv.dim(1), g0 = fv.dim(2),
                     g1 = fv.dim(3);
  if (lips.length() != t)
    throw NumericError("landmark_gather: lip track length mismatch");
  const std::int64_t k = lips.landmark_count;
  Tensor out({t, k * c});
  // Clamped floor rescale from crop space onto the feature grid.
  auto grid_point = [&](const std::array<int, 2>& p) {
    std::int64_t x = static_cast<std::int64_t>(
        std::floor(static_cast<double>(p[0]) * g0 / crop_size));
    std::int64_t y = static_cast<std::int64_t>(
        std::floor(static_cast<double>(p[1]) * g1 / crop_size));
    x = std::clamp<std::int64_t>(x, 0, g0 - 1);
    y = std::clamp<std::int64_t>(y, 0, g1 - 1);
    return std::pair<std::int64_t, std::int64_t>(x, y);
  };
  std::vector<std::int64_t> pix(static_cast<std::size_t>(t * k), -1);
  for (std::int64_t f = 0; f < t; ++f) {
    const auto& fr = lips.frames[static_cast<std::size_t>(f)];
    if (!fr.has_value()) continue;  // zero row
    for (std::int64_t i = 0; i < k; ++i) {
      const auto [x, y] = grid_point((*fr)[static_cast<std::size_t>(i)]);
      const std::int64_t at = x * g1 + y;
      pix[static_cast<std::size_t>(f * k + i)] = at;
      for (std::int64_t ch = 0; ch < c; ++ch)
        out[f * k * c + i * c + ch] = fv[(f * c + ch) * g0 * g1 + at];
    }
  }
  return ag::make_custom(
      std::move(out), {features}, [t, c, k, g0, g1, pix = std::move(pix)](ag::Node& n) {
        if (!n.parents[0]->requires_grad) return;
        Tensor& pg = n.parents[0]->ensure_grad();
        const Tensor& g = n.grad;
        for (std::int64_t f = 0; f < t; ++f)
          for (std::int64_t i = 0; i < k; ++i) {
            const std::int64_t at = pix[static_cast<std::size_t>(f * k + i)];
            if (at < 0) continue;
            for (std::int64_t ch = 0; ch < c; ++ch)
              pg[(f * c + ch) * g0 * g1 + at] += g[f * k * c + i * c + ch];
          }
      });
}

ag::Value ldi_encode_graph(const LipTrack& lips, std::int64_t crop_size,
                           const ag::Value& conv1_w, const ag::Value& conv2_w) {
  const std::int64_t t = lips.length(), k = lips.landmark_count;
  Tensor grid({1, 2, t, k});
  for (std::int64_t f = 0; f < t; ++f) {
    const auto& fr = lips.frames[static_cast<std::size_t>(f)];
    if (!fr.has_value()) continue;  // zero-filled
    for (std::int64_t i = 0; i < k; ++i) {
      const auto& p = (*fr)[static_cast<std::size_t>(i)];
      grid[(0 * t + f) * k + i] = static_cast<double>(p[0]) / crop_size;
      grid[(1 * t + f) * k + i] = static_cast<double>(p[1]) / crop_size;
    }
  }
  ag::Value x = ag::constant(std::move(grid));
  x = ag::relu(ag::conv2d(x, conv1_w, ag::Value(), /*stride=*/1, /*pad=*/1));
  x = ag::relu(ag::conv2d(x, conv2_w, ag::Value(), /*stride=*/1, /*pad=*/1));
  // [1, width, T, K] -> per-frame rows [T, width*K]
  const std::int64_t w = x.val().dim(1);
  ag::Value flat = ag::reshape(x, {w, t * k});       // channel-major
  flat = ag::transpose(flat);                        // [T*K, width] rows t*k
  flat = ag::reshape(flat, {t, k * w});
  return flat;
}

std::int64_t extra_parameter_count(const std::string& method,
                                   const ParamCountConfig& cfg) {
  const std::int64_t k = cfg.landmark_count, s = cfg.aggregated_channels,
                     c = cfg.feature_channels, d = cfg.embed_dim;
  if (method == "laser") return 2 * s * k;
  if (method == "pooling") return k * c * d + 2 * d * d;
  if (method == "ldi") {
    std::int64_t conv = static_cast<std::int64_t>(cfg.ldi_width) * 2 * 9;
    for (int l = 1; l < cfg.ldi_layers; ++l)
      conv += static_cast<std::int64_t>(cfg.ldi_width) * cfg.ldi_width * 9;
    return conv + k * cfg.ldi_width * d + 2 * d * d;
  }
  throw ConfigError("extra_parameter_count: unknown method '" + method + "'");
}

}  // namespace laser
