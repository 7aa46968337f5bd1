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

#ifndef LASER_LIP_ENCODING_H_
#define LASER_LIP_ENCODING_H_

#include <cstdint>
#include <string>

#include "laser/core_data.h"
#include "laser/graph.h"
#include "laser/rng.h"
#include "laser/tensor.h"

namespace laser {

// Sparse encoding of a lip track over a W x H grid. Logically a
// [T, K, 2, W, H] tensor where each (frame, landmark, coordinate) plane has
// at most one nonzero entry: the x-plane holds x/W at (x, y), the y-plane
// holds y/H there. Spatial axes are ordered (x, y) everywhere in this
// codebase; grids are square in practice (crops are square by invariant).
// Stored sparsely: the dense form is materialized on demand.
struct EncodedLipMaps {
  struct Frame {
    bool present = false;
    LandmarkSet points;  // raw coordinates; out-of-bounds entries encode to 0
  };

  std::int64_t width = 0;   // W
  std::int64_t height = 0;  // H
  int landmark_count = 0;   // K
  std::vector<Frame> frames;

  std::int64_t length() const { return static_cast<std::int64_t>(frames.size()); }
  std::vector<std::int64_t> shape() const {
    return {length(), landmark_count, 2, width, height};
  }
  bool in_bounds(const std::array<int, 2>& p) const {
    return p[0] >= 0 && p[0] < width && p[1] >= 0 && p[1] < height;
  }
  // Dense [T, K, 2, W, H]; intended for tests, demos and small grids.
  Tensor to_dense() const;
};

// Dense aggregation of the sparse maps, [T, S, 2, W, H].
struct AggregatedLipMaps {
  std::int64_t aggregated_channels = 0;  // S
  Tensor values;
};

// The two per-coordinate bias-free 1x1 convolutions (K -> S channel maps).
struct LipAggregator {
  Tensor weights_x;  // [S, K]
  Tensor weights_y;  // [S, K]

  int s() const { return static_cast<int>(weights_x.dim(0)); }
  int k() const { return static_cast<int>(weights_x.dim(1)); }
  static LipAggregator uniform(int s, int k);          // every weight 1/K
  static LipAggregator random(int s, int k, Rng& rng); // N(0, 1/sqrt(K))
  void validate() const;
};

// Converts landmark coordinates to sparse maps. Out-of-bounds landmarks are
// dropped (all-zero plane); absent frames give all-zero maps.
EncodedLipMaps encode_lip_landmarks(const LipTrack& lips, std::int64_t width,
                                    std::int64_t height);

// Pixelwise bias-free channel condensation, out[s,c] = sum_k w_c[s,k]*in[k,c].
AggregatedLipMaps aggregate(const EncodedLipMaps& maps,
                            const LipAggregator& agg);

// Graph version used inside the model forward: output channels are
// interleaved as channel 2s = x-plane s, channel 2s+1 = y-plane s, shape
// [T, 2S, W, H]. Gradients flow into the weight Values.
ag::Value aggregate_lip_graph(const EncodedLipMaps& maps, const ag::Value& wx,
                              const ag::Value& wy);

// Coordinate rescale between square grids (floor scaling); absences kept.
LipTrack rescale_lip_track(const LipTrack& lips, std::int64_t from_size,
                           std::int64_t to_size);

// Landmark-pooling integration: gathers the feature column at each landmark
// (coordinates rescaled to the feature grid and clamped), one [K*C] row per
// frame; absent frames give zero rows. Gradients flow into `features`.
ag::Value landmark_gather(const ag::Value& features, const LipTrack& lips,
                          std::int64_t crop_size);

// Landmark-as-discrete-inputs encoding: normalized coordinates as a
// 2-channel (T, K) grid run through a bias-free 3x3 conv stack, flattened
// per frame. conv weights: [width, 2, 3, 3] and [width, width, 3, 3].
ag::Value ldi_encode_graph(const LipTrack& lips, std::int64_t crop_size,
                           const ag::Value& conv1_w, const ag::Value& conv2_w);

// Parameters added on top of the landmark-free backbone by each integration
// method.
struct ParamCountConfig {
  int landmark_count = 82;  // K
  int aggregated_channels = 4;  // S
  int feature_channels = 64;    // C, channels of the pooled feature map
  int embed_dim = 128;          // D
  int ldi_width = 16;
  int ldi_layers = 2;
};

std::int64_t extra_parameter_count(const std::string& method,
                                   const ParamCountConfig& cfg);

}  // namespace laser

#endif  // LASER_LIP_ENCODING_H_
