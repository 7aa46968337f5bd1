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

#ifndef LASER_ASD_MODEL_H_
#define LASER_ASD_MODEL_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "laser/core_data.h"
#include "laser/graph.h"
#include "laser/lip_encoding.h"
#include "laser/rng.h"

namespace laser {

struct VisualEncoderConfig {
  int conv3d_out_channels = 16;
  std::vector<int> resnet_stage_widths = {16, 32};
  int vtcn_blocks = 3;
  int embed_dim = 64;           // D
  int lip_injection_stage = 1;  // 1-based: lip maps enter before this stage
  void validate() const;
};

struct AudioEncoderConfig {
  int embed_dim = 64;  // C
  int n_mels = 40;
  void validate() const;
};

struct ContextModuleConfig {
  int attention_heads = 2;
  int hidden_dim = 64;
  bool positional_encoding = false;
  void validate() const;
};

// How lip landmarks enter the network. kNone is the landmark-free baseline;
// kPooling and kLdi are the two alternative integration baselines.
enum class LipIntegration { kNone, kLte, kPooling, kLdi };

std::string to_string(LipIntegration m);
LipIntegration lip_integration_from_string(const std::string& s);

struct ModelConfig {
  VisualEncoderConfig visual;
  AudioEncoderConfig audio;
  ContextModuleConfig context;
  LipIntegration integration = LipIntegration::kLte;
  int landmark_count = 82;      // K
  int aggregated_channels = 4;  // S, reference setting
  int crop_size = 112;
  int ldi_width = 16;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  // A small configuration for desk-scale experiments and tests.
  static ModelConfig tiny(int crop, int landmarks = 82);
};

struct HeadsOut {
  ag::Value probs_av;
  ag::Value probs_v;
  ag::Value probs_a;

  FramePredictions to_predictions() const;
};

// The audiovisual network: visual encoder (3D conv -> ResNet stages with lip
// map injection -> V-TCN), audio encoder (stride-4 temporal conv stack),
// context module (per-modality self-attention + cross-modal block with a
// gated product pathway) and three classifier heads.
class AsdModel {
 public:
  AsdModel(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }

  // Graph-level forwards (gradients flow into the parameters).
  ag::Value visual_forward_graph(const FaceTrack& track, const LipTrack* lips);
  ag::Value audio_forward_graph(const MelSpectrogram& mel);
  HeadsOut context_forward_graph(const ag::Value& f_v, const ag::Value& f_a);

  HeadsOut forward(const FaceTrack& track, const MelSpectrogram& mel,
                   const LipTrack* lips);

  struct DualPass {
    HeadsOut lip_aware;
    HeadsOut no_lip;
  };
  // Shares the audio subgraph between the two passes.
  DualPass forward_dual(const FaceTrack& track, const MelSpectrogram& mel,
                        const LipTrack& lips);

  // Plain forwards per the module contracts.
  Tensor visual_forward(const FaceTrack& track,
                        const AggregatedLipMaps* lip_maps);
  Tensor audio_forward(const MelSpectrogram& mel);
  FramePredictions context_forward(const Tensor& f_v, const Tensor& f_a);
  FramePredictions predict(const FaceTrack& track, const MelSpectrogram& mel,
                           const LipTrack* lips);

  // Channel accounting: input channels of ResNet stage `stage` (1-based).
  int stage_input_channels(int stage) const;

  std::vector<std::pair<std::string, ag::Value>>& parameters() {
    return params_;
  }
  ag::Value param(const std::string& name) const;
  void zero_grads();
  std::int64_t parameter_count() const;

  std::vector<std::pair<std::string, Tensor>> state() const;
  void load_state(const std::map<std::string, Tensor>& tensors);

 private:
  // Multi-head attention; when sync_out is non-null it receives the
  // per-frame diagonal of each head's score matrix ([T, heads]), a direct
  // query-key affinity between the two streams at the same frame.
  ag::Value mha(const ag::Value& q_in, const ag::Value& kv_in,
                const std::string& prefix, ag::Value* sync_out = nullptr);
  ag::Value lip_planes_graph(const FaceTrack& track, const LipTrack* lips,
                             std::int64_t grid);
  ag::Value backbone(const FaceTrack& track, const ag::Value* lip_planes,
                     ag::Value* stage1_features);
  ag::Value visual_from_planes(const FaceTrack& track, const LipTrack* lips,
                               const ag::Value* lip_planes);

  ModelConfig cfg_;
  std::vector<std::pair<std::string, ag::Value>> params_;
  std::map<std::string, std::size_t> index_;

  ag::Value add_param(const std::string& name, Tensor t);
};

// Checkpoint container: magic "LSRC", version, little-endian JSON header
// (config, metadata, tensor directory), then raw float64 tensor data in
// directory order. Layout details in docs/formats.md.
struct Checkpoint {
  ModelConfig config;
  nlohmann::json meta;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::string& path);

// Sinusoidal positional encoding table [t, dim].
Tensor sinusoidal_positions(std::int64_t t, std::int64_t dim);

}  // namespace laser

#endif  // LASER_ASD_MODEL_H_
