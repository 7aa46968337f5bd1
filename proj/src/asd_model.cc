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

#include "laser/asd_model.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "laser/common.h"

namespace laser {

using ag::Value;
using nlohmann::json;

void VisualEncoderConfig::validate() const {
  if (conv3d_out_channels < 1) throw ConfigError("conv3d_out_channels < 1");
  if (resnet_stage_widths.empty()) throw ConfigError("no resnet stages");
  for (int w : resnet_stage_widths)
    if (w < 1) throw ConfigError("resnet stage width < 1");
  if (vtcn_blocks < 0) throw ConfigError("vtcn_blocks < 0");
  if (embed_dim < 1) throw ConfigError("visual embed_dim < 1");
  if (lip_injection_stage < 1 ||
      lip_injection_stage > static_cast<int>(resnet_stage_widths.size()))
    throw ConfigError("lip_injection_stage out of range");
}

void AudioEncoderConfig::validate() const {
  if (embed_dim < 1) throw ConfigError("audio embed_dim < 1");
  if (n_mels < 1) throw ConfigError("n_mels < 1");
}

void ContextModuleConfig::validate() const {
  if (attention_heads < 1) throw ConfigError("attention_heads < 1");
  if (hidden_dim < 1) throw ConfigError("hidden_dim < 1");
  if (hidden_dim % attention_heads != 0)
    throw ConfigError("hidden_dim must be divisible by attention_heads");
}

std::string to_string(LipIntegration m) {
  switch (m) {
    case LipIntegration::kNone: return "none";
    case LipIntegration::kLte: return "lte";
    case LipIntegration::kPooling: return "pooling";
    case LipIntegration::kLdi: return "ldi";
  }
  return "none";
}

LipIntegration lip_integration_from_string(const std::string& s) {
  if (s == "none") return LipIntegration::kNone;
  if (s == "lte") return LipIntegration::kLte;
  if (s == "pooling") return LipIntegration::kPooling;
  if (s == "ldi") return LipIntegration::kLdi;
  throw ConfigError("unknown lip integration '" + s + "'");
}

void ModelConfig::validate() const {
  visual.validate();
  audio.validate();
  context.validate();
  if (landmark_count < 1) throw ConfigError("landmark_count < 1");
  if (aggregated_channels < 1) throw ConfigError("aggregated_channels < 1");
  if (crop_size < 2) throw ConfigError("crop_size < 2");
  if (ldi_width < 1) throw ConfigError("ldi_width < 1");
  // Every stage halves the grid; the deepest stage needs a nonempty grid.
  int grid = crop_size;
  for (std::size_t i = 0; i < visual.resnet_stage_widths.size(); ++i) {
    grid /= 2;
    if (grid < 1) throw ConfigError("crop_size too small for stage count");
  }
}

json ModelConfig::to_json() const {
  json j;
  j["visual"] = {{"conv3d_out_channels", visual.conv3d_out_channels},
                 {"resnet_stage_widths", visual.resnet_stage_widths},
                 {"vtcn_blocks", visual.vtcn_blocks},
                 {"embed_dim", visual.embed_dim},
                 {"lip_injection_stage", visual.lip_injection_stage}};
  j["audio"] = {{"embed_dim", audio.embed_dim}, {"n_mels", audio.n_mels}};
  j["context"] = {{"attention_heads", context.attention_heads},
                  {"hidden_dim", context.hidden_dim},
                  {"positional_encoding", context.positional_encoding}};
  j["integration"] = to_string(integration);
  j["landmark_count"] = landmark_count;
  j["aggregated_channels"] = aggregated_channels;
  j["crop_size"] = crop_size;
  j["ldi_width"] = ldi_width;
  return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  const json& v = j.at("visual");
  c.visual.conv3d_out_channels = v.at("conv3d_out_channels").get<int>();
  c.visual.resnet_stage_widths =
      v.at("resnet_stage_widths").get<std::vector<int>>();
  c.visual.vtcn_blocks = v.at("vtcn_blocks").get<int>();
  c.visual.embed_dim = v.at("embed_dim").get<int>();
  c.visual.lip_injection_stage = v.at("lip_injection_stage").get<int>();
  const json& a = j.at("audio");
  c.audio.embed_dim = a.at("embed_dim").get<int>();
  c.audio.n_mels = a.at("n_mels").get<int>();
  const json& g = j.at("context");
  c.context.attention_heads = g.at("attention_heads").get<int>();
  c.context.hidden_dim = g.at("hidden_dim").get<int>();
  c.context.positional_encoding = g.at("positional_encoding").get<bool>();
  c.integration = lip_integration_from_string(j.at("integration").get<std::string>());
  c.landmark_count = j.at("landmark_count").get<int>();
  c.aggregated_channels = j.at("aggregated_channels").get<int>();
  c.crop_size = j.at("crop_size").get<int>();
  c.ldi_width = j.at("ldi_width").get<int>();
  c.validate();
  return c;
}

ModelConfig ModelConfig::tiny(int crop, int landmarks) {
  ModelConfig c;
  c.visual.conv3d_out_channels = 6;
  c.visual.resnet_stage_widths = {12, 16};
  c.visual.vtcn_blocks = 2;
  c.visual.embed_dim = 28;
  c.visual.lip_injection_stage = 1;
  c.audio.embed_dim = 28;
  c.audio.n_mels = 40;
  c.context.attention_heads = 2;
  c.context.hidden_dim = 40;
  c.context.positional_encoding = false;
  c.landmark_count = landmarks;
  c.aggregated_channels = 4;
  c.crop_size = crop;
  return c;
}

FramePredictions HeadsOut::to_predictions() const {
  FramePredictions p;
  p.probs_av = probs_av.val();
  p.probs_v = probs_v.val();
  p.probs_a = probs_a.val();
  return p;
}

Tensor sinusoidal_positions(std::int64_t t, std::int64_t dim) {
  Tensor pe({t, dim});
  for (std::int64_t i = 0; i < t; ++i)
    for (std::int64_t d = 0; d < dim; ++d) {
      const double rate =
          std::pow(10000.0, -2.0 * static_cast<double>(d / 2) /
                                static_cast<double>(dim));
      const double arg = static_cast<double>(i) * rate;
      pe[i * dim + d] = (d % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
  return pe;
}

namespace {

Tensor init_normal(std::vector<std::int64_t> shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, sd);
  return t;
}

double fan_in_conv(const std::vector<std::int64_t>& shape) {
  double f = 1.0;
  for (std::size_t i = 1; i < shape.size(); ++i)
    f *= static_cast<double>(shape[i]);
  return f;
}

}  // namespace

Value AsdModel::add_param(const std::string& name, Tensor t) {
  Value v = ag::leaf(std::move(t), /*requires_grad=*/true);
  index_[name] = params_.size();
  params_.emplace_back(name, v);
  return v;
}

Value AsdModel::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no such parameter: " + name);
  return params_[it->second].second;
}

void AsdModel::zero_grads() {
  for (auto& [name, v] : params_) {
    (void)name;
    if (v.node()->grad.defined()) v.node()->grad.fill(0.0);
  }
}

std::int64_t AsdModel::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : params_) {
    (void)name;
    n += v.val().numel();
  }
  return n;
}

AsdModel::AsdModel(ModelConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(init_seed);
  const auto& vc = cfg_.visual;
  const int s2 = 2 * cfg_.aggregated_channels;

  auto he_conv = [&](const std::string& name, std::vector<std::int64_t> shape) {
    const double sd = std::sqrt(2.0 / fan_in_conv(shape));
    add_param(name, init_normal(std::move(shape), sd, rng));
  };
  auto xavier = [&](const std::string& name, std::int64_t in, std::int64_t out) {
    const double sd = std::sqrt(2.0 / static_cast<double>(in + out));
    add_param(name, init_normal({in, out}, sd, rng));
  };
  auto zeros = [&](const std::string& name, std::vector<std::int64_t> shape) {
    add_param(name, Tensor(std::move(shape)));
  };

  // Visual encoder.
  he_conv("v.conv3d.w", {vc.conv3d_out_channels, 1, 3, 3, 3});
  zeros("v.conv3d.b", {vc.conv3d_out_channels});
  for (std::size_t i = 0; i < vc.resnet_stage_widths.size(); ++i) {
    const int w = vc.resnet_stage_widths[i];
    const int in = stage_input_channels(static_cast<int>(i) + 1);
    const std::string p = "v.stage" + std::to_string(i + 1);
    he_conv(p + ".conv1.w", {w, in, 3, 3});
    zeros(p + ".conv1.b", {w});
    he_conv(p + ".conv2.w", {w, w, 3, 3});
    zeros(p + ".conv2.b", {w});
    he_conv(p + ".short.w", {w, in, 1, 1});
    zeros(p + ".short.b", {w});
  }
  // Per-frame features: 4x4 region pooling of the stage-1 input (one conv
  // away from pixels, and where the lip planes enter) concatenated with 3x3
  // region pooling of the deepest stage. The shallow path keeps mouth-region
  // statistics readable without a deep credit-assignment chain.
  const int w_last = vc.resnet_stage_widths.back();
  const std::int64_t proj_in =
      static_cast<std::int64_t>(stage_input_channels(1)) * 16 +
      static_cast<std::int64_t>(w_last) * 9;
  xavier("v.proj.w", proj_in, vc.embed_dim);
  zeros("v.proj.b", {vc.embed_dim});
  for (int j = 0; j < vc.vtcn_blocks; ++j) {
    const std::string p = "v.vtcn" + std::to_string(j + 1);
    he_conv(p + ".w", {vc.embed_dim, vc.embed_dim, 3});
    zeros(p + ".b", {vc.embed_dim});
  }

  // Lip integration parameters.
  if (cfg_.integration == LipIntegration::kLte) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(cfg_.landmark_count));
    add_param("agg.wx", init_normal({cfg_.aggregated_channels,
                                     cfg_.landmark_count}, sd, rng));
    add_param("agg.wy", init_normal({cfg_.aggregated_channels,
                                     cfg_.landmark_count}, sd, rng));
  } else if (cfg_.integration == LipIntegration::kPooling) {
    const int c1 = vc.resnet_stage_widths[0];
    xavier("pool.proj1.w",
           static_cast<std::int64_t>(cfg_.landmark_count) * c1, vc.embed_dim);
    xavier("pool.proj2.w", 2 * vc.embed_dim, vc.embed_dim);
  } else if (cfg_.integration == LipIntegration::kLdi) {
    he_conv("ldi.conv1.w", {cfg_.ldi_width, 2, 3, 3});
    he_conv("ldi.conv2.w", {cfg_.ldi_width, cfg_.ldi_width, 3, 3});
    xavier("ldi.proj1.w",
           static_cast<std::int64_t>(cfg_.landmark_count) * cfg_.ldi_width,
           vc.embed_dim);
    xavier("ldi.proj2.w", 2 * vc.embed_dim, vc.embed_dim);
  }
  (void)s2;

  // Audio encoder.
  const auto& ac = cfg_.audio;
  he_conv("a.conv1.w", {ac.embed_dim, ac.n_mels, 3});
  zeros("a.conv1.b", {ac.embed_dim});
  he_conv("a.conv2.w", {ac.embed_dim, ac.embed_dim, 3});
  zeros("a.conv2.b", {ac.embed_dim});
  xavier("a.proj.w", ac.embed_dim, ac.embed_dim);
  zeros("a.proj.b", {ac.embed_dim});

  // Context module.
  const int dm = cfg_.context.hidden_dim;
  xavier("c.vproj.w", vc.embed_dim, dm);
  zeros("c.vproj.b", {dm});
  xavier("c.aproj.w", ac.embed_dim, dm);
  zeros("c.aproj.b", {dm});
  add_param("c.ln_v.gamma", Tensor({dm}, 1.0));
  zeros("c.ln_v.beta", {dm});
  add_param("c.ln_a.gamma", Tensor({dm}, 1.0));
  zeros("c.ln_a.beta", {dm});
  for (const std::string blk : {"self_v", "self_a", "cross_v", "cross_a"}) {
    for (const std::string mat : {"wq", "wk", "wv", "wo"})
      xavier("c." + blk + "." + mat, dm, dm);
    for (const std::string bias : {"bq", "bk", "bv", "bo"})
      zeros("c." + blk + "." + bias, {dm});
  }
  xavier("c.fuse.w", 3 * dm + 2 * cfg_.context.attention_heads, dm);
  zeros("c.fuse.b", {dm});
  // Post-fusion temporal blocks: the cross-modal (product) features need a
  // window of context before the per-frame decision.
  for (int j = 0; j < 2; ++j) {
    const std::string p = "c.post" + std::to_string(j + 1);
    he_conv(p + ".w", {dm, dm, 7});
    zeros(p + ".b", {dm});
  }
  xavier("c.uni_v.w", dm, dm);
  zeros("c.uni_v.b", {dm});
  xavier("c.uni_a.w", dm, dm);
  zeros("c.uni_a.b", {dm});
  // Heads start at exactly uniform predictions.
  for (const std::string h : {"head_av", "head_v", "head_a"}) {
    zeros("c." + h + ".w", {dm, 2});
    zeros("c." + h + ".b", {2});
  }
}

int AsdModel::stage_input_channels(int stage) const {
  const auto& vc = cfg_.visual;
  if (stage < 1 || stage > static_cast<int>(vc.resnet_stage_widths.size()))
    throw ConfigError("stage out of range");
  int in = stage == 1 ? vc.conv3d_out_channels
                      : vc.resnet_stage_widths[static_cast<std::size_t>(stage) - 2];
  if (cfg_.integration == LipIntegration::kLte &&
      vc.lip_injection_stage == stage)
    in += 2 * cfg_.aggregated_channels;
  return in;
}

Value AsdModel::lip_planes_graph(const FaceTrack& track, const LipTrack* lips,
                                 std::int64_t grid) {
  const std::int64_t t = track.length();
  const int s2 = 2 * cfg_.aggregated_channels;
  if (lips == nullptr) {
    // Landmark-free path: the lip channel block is exactly zero.
    return ag::constant(Tensor({t, s2, grid, grid}));
  }
  if (lips->landmark_count != cfg_.landmark_count)
    throw DataError("lip track has K=" + std::to_string(lips->landmark_count) +
                    ", model expects K=" + std::to_string(cfg_.landmark_count));
  if (lips->length() != t)
    throw DataError("lip track length != face track length");
  const std::int64_t crop = track.crop_size();
  EncodedLipMaps enc =
      grid == crop
          ? encode_lip_landmarks(*lips, grid, grid)
          : encode_lip_landmarks(rescale_lip_track(*lips, crop, grid), grid,
                                 grid);
  return aggregate_lip_graph(enc, param("agg.wx"), param("agg.wy"));
}

Value AsdModel::backbone(const FaceTrack& track, const Value* lip_planes,
                         Value* stage1_features) {
  const std::int64_t t = track.length();
  if (t < 1) throw DataError("visual_forward: empty track");
  if (track.crop_size() != cfg_.crop_size)
    throw DataError("track crop " + std::to_string(track.crop_size()) +
                    " != model crop " + std::to_string(cfg_.crop_size));
  Value x = ag::constant(
      track.frames.reshaped({t, 1, cfg_.crop_size, cfg_.crop_size}));
  x = ag::relu(ag::conv3d(x, param("v.conv3d.w"), param("v.conv3d.b")));
  const auto& vc = cfg_.visual;
  Value shallow;
  for (std::size_t i = 0; i < vc.resnet_stage_widths.size(); ++i) {
    const std::string p = "v.stage" + std::to_string(i + 1);
    if (lip_planes != nullptr &&
        vc.lip_injection_stage == static_cast<int>(i) + 1)
      x = ag::concat_channels(x, *lip_planes);
    if (i == 0) shallow = ag::region_avg_pool(x, 4);
    Value y = ag::relu(
        ag::conv2d(x, param(p + ".conv1.w"), param(p + ".conv1.b"), 2, 1));
    y = ag::conv2d(y, param(p + ".conv2.w"), param(p + ".conv2.b"), 1, 1);
    Value sh =
        ag::conv2d(x, param(p + ".short.w"), param(p + ".short.b"), 2, 0);
    x = ag::relu(ag::add(y, sh));
    if (i == 0 && stage1_features != nullptr) *stage1_features = x;
  }
  Value f = ag::add_bias(
      ag::matmul(ag::concat_cols(shallow, ag::region_avg_pool(x, 3)),
                 param("v.proj.w")),
      param("v.proj.b"));
  return f;
}

Value AsdModel::visual_from_planes(const FaceTrack& track, const LipTrack* lips,
                                   const Value* lip_planes) {
  const std::int64_t t = track.length();
  Value stage1;
  const bool need_stage1 = cfg_.integration == LipIntegration::kPooling;
  Value f = backbone(track, lip_planes, need_stage1 ? &stage1 : nullptr);

  if (cfg_.integration == LipIntegration::kPooling ||
      cfg_.integration == LipIntegration::kLdi) {
    LipTrack empty;
    empty.landmark_count = cfg_.landmark_count;
    empty.frames.assign(static_cast<std::size_t>(t), std::nullopt);
    const LipTrack& lt = lips ? *lips : empty;
    Value hld;
    if (cfg_.integration == LipIntegration::kPooling) {
      Value gathered = landmark_gather(stage1, lt, cfg_.crop_size);
      hld = ag::matmul(gathered, param("pool.proj1.w"));
      f = ag::matmul(ag::concat_cols(f, hld), param("pool.proj2.w"));
    } else {
      LipTrack zeroed = lt;  // absent frames become zero-filled coordinates
      for (auto& fr : zeroed.frames)
        if (!fr.has_value())
          fr = LandmarkSet(static_cast<std::size_t>(cfg_.landmark_count),
                           {0, 0});
      Value enc = ldi_encode_graph(zeroed, cfg_.crop_size,
                                   param("ldi.conv1.w"), param("ldi.conv2.w"));
      hld = ag::matmul(enc, param("ldi.proj1.w"));
      f = ag::matmul(ag::concat_cols(f, hld), param("ldi.proj2.w"));
    }
  }

  for (int j = 0; j < cfg_.visual.vtcn_blocks; ++j) {
    const std::string p = "v.vtcn" + std::to_string(j + 1);
    f = ag::add(f, ag::relu(ag::conv1d(f, param(p + ".w"), param(p + ".b"),
                                       1, 1)));
  }
  return f;
}

Value AsdModel::visual_forward_graph(const FaceTrack& track,
                                     const LipTrack* lips) {
  if (cfg_.integration == LipIntegration::kLte) {
    const std::int64_t grid =
        cfg_.crop_size >> (cfg_.visual.lip_injection_stage - 1);
    Value planes = lip_planes_graph(track, lips, grid);
    return visual_from_planes(track, lips, &planes);
  }
  if (cfg_.integration == LipIntegration::kNone)
    return visual_from_planes(track, nullptr, nullptr);
  return visual_from_planes(track, lips, nullptr);
}

Value AsdModel::audio_forward_graph(const MelSpectrogram& mel) {
  const std::int64_t rows = mel.rows();
  if (rows < 4 || rows % 4 != 0)
    throw DataError("audio_forward: mel rows (" + std::to_string(rows) +
                    ") must be a positive multiple of 4");
  if (mel.n_mels != cfg_.audio.n_mels)
    throw DataError("audio_forward: n_mels mismatch");
  Value x = ag::constant(mel.values);
  x = ag::relu(ag::conv1d(x, param("a.conv1.w"), param("a.conv1.b"), 2, 1));
  x = ag::relu(ag::conv1d(x, param("a.conv2.w"), param("a.conv2.b"), 2, 1));
  return ag::add_bias(ag::matmul(x, param("a.proj.w")), param("a.proj.b"));
}

Value AsdModel::mha(const Value& q_in, const Value& kv_in,
                    const std::string& prefix, Value* sync_out) {
  const int dm = cfg_.context.hidden_dim;
  const int heads = cfg_.context.attention_heads;
  const std::int64_t dh = dm / heads;
  Value q = ag::add_bias(ag::matmul(q_in, param(prefix + ".wq")),
                         param(prefix + ".bq"));
  Value k = ag::add_bias(ag::matmul(kv_in, param(prefix + ".wk")),
                         param(prefix + ".bk"));
  Value v = ag::add_bias(ag::matmul(kv_in, param(prefix + ".wv")),
                         param(prefix + ".bv"));
  Value ctx, sync;
  for (int h = 0; h < heads; ++h) {
    Value qh = ag::slice_cols(q, h * dh, dh);
    Value kh = ag::slice_cols(k, h * dh, dh);
    Value vh = ag::slice_cols(v, h * dh, dh);
    Value scores = ag::scale(ag::matmul(qh, ag::transpose(kh)),
                             1.0 / std::sqrt(static_cast<double>(dh)));
    if (sync_out != nullptr) {
      Value d = ag::diag_rows(scores);
      sync = h == 0 ? d : ag::concat_cols(sync, d);
    }
    Value att = ag::softmax_rows(scores);
    Value ch = ag::matmul(att, vh);
    ctx = h == 0 ? ch : ag::concat_cols(ctx, ch);
  }
  if (sync_out != nullptr) *sync_out = sync;
  return ag::add_bias(ag::matmul(ctx, param(prefix + ".wo")),
                      param(prefix + ".bo"));
}

HeadsOut AsdModel::context_forward_graph(const Value& f_v, const Value& f_a) {
  if (f_v.val().ndim() != 2 || f_a.val().ndim() != 2 ||
      f_v.val().dim(0) != f_a.val().dim(0))
    throw DataError("context_forward: feature shapes disagree (" +
                    f_v.val().shape_str() + " vs " + f_a.val().shape_str() +
                    ")");
  if (f_v.val().dim(1) != cfg_.visual.embed_dim ||
      f_a.val().dim(1) != cfg_.audio.embed_dim)
    throw DataError("context_forward: embedding dims mismatch");
  const std::int64_t t = f_v.val().dim(0);
  const int dm = cfg_.context.hidden_dim;
  // Temporal centering strips per-track static structure (identity, scene
  // brightness, tone level) so the cross-modal stage sees dynamics.
  Value v = ag::layer_norm_rows(
      ag::center_time(
          ag::add_bias(ag::matmul(f_v, param("c.vproj.w")), param("c.vproj.b"))),
      param("c.ln_v.gamma"), param("c.ln_v.beta"));
  Value a = ag::layer_norm_rows(
      ag::center_time(
          ag::add_bias(ag::matmul(f_a, param("c.aproj.w")), param("c.aproj.b"))),
      param("c.ln_a.gamma"), param("c.ln_a.beta"));
  if (cfg_.context.positional_encoding) {
    Value pe = ag::constant(sinusoidal_positions(t, dm));
    v = ag::add(v, pe);
    a = ag::add(a, pe);
  }
  Value sv = ag::add(v, mha(v, v, "c.self_v"));
  Value sa = ag::add(a, mha(a, a, "c.self_a"));
  Value sync_v, sync_a;
  Value cv = ag::add(sv, mha(sv, sa, "c.cross_v", &sync_v));
  Value ca = ag::add(sa, mha(sa, sv, "c.cross_a", &sync_a));
  Value prod = ag::mul(cv, ca);
  Value fused_in = ag::concat_cols(
      ag::concat_cols(ag::concat_cols(cv, ca), prod),
      ag::concat_cols(sync_v, sync_a));
  Value fav = ag::relu(ag::add_bias(
      ag::matmul(fused_in, param("c.fuse.w")), param("c.fuse.b")));
  for (int j = 0; j < 2; ++j) {
    const std::string p = "c.post" + std::to_string(j + 1);
    fav = ag::add(fav, ag::relu(ag::conv1d(fav, param(p + ".w"),
                                           param(p + ".b"), 1, 3)));
  }
  Value fv2 = ag::relu(
      ag::add_bias(ag::matmul(cv, param("c.uni_v.w")), param("c.uni_v.b")));
  Value fa2 = ag::relu(
      ag::add_bias(ag::matmul(ca, param("c.uni_a.w")), param("c.uni_a.b")));
  HeadsOut out;
  out.probs_av = ag::softmax_rows(ag::add_bias(
      ag::matmul(fav, param("c.head_av.w")), param("c.head_av.b")));
  out.probs_v = ag::softmax_rows(ag::add_bias(
      ag::matmul(fv2, param("c.head_v.w")), param("c.head_v.b")));
  out.probs_a = ag::softmax_rows(ag::add_bias(
      ag::matmul(fa2, param("c.head_a.w")), param("c.head_a.b")));
  return out;
}

HeadsOut AsdModel::forward(const FaceTrack& track, const MelSpectrogram& mel,
                           const LipTrack* lips) {
  if (mel.rows() != 4 * track.length())
    throw DataError("forward: mel rows != 4T for track " + track.track_id);
  Value fv = visual_forward_graph(track, lips);
  Value fa = audio_forward_graph(mel);
  return context_forward_graph(fv, fa);
}

AsdModel::DualPass AsdModel::forward_dual(const FaceTrack& track,
                                          const MelSpectrogram& mel,
                                          const LipTrack& lips) {
  if (mel.rows() != 4 * track.length())
    throw DataError("forward_dual: mel rows != 4T");
  Value fa = audio_forward_graph(mel);  // shared between the passes
  DualPass out;
  out.lip_aware =
      context_forward_graph(visual_forward_graph(track, &lips), fa);
  out.no_lip =
      context_forward_graph(visual_forward_graph(track, nullptr), fa);
  return out;
}

Tensor AsdModel::visual_forward(const FaceTrack& track,
                                const AggregatedLipMaps* lip_maps) {
  if (cfg_.integration == LipIntegration::kLte && lip_maps != nullptr) {
    const std::int64_t grid =
        cfg_.crop_size >> (cfg_.visual.lip_injection_stage - 1);
    const Tensor& m = lip_maps->values;
    if (m.ndim() != 5 || m.dim(3) != grid || m.dim(4) != grid ||
        m.dim(0) != track.length())
      throw DataError("visual_forward: lip map shape " + m.shape_str() +
                      " does not match the injection grid");
    Value planes = ag::constant(m.reshaped(
        {m.dim(0), m.dim(1) * m.dim(2), m.dim(3), m.dim(4)}));
    return visual_from_planes(track, nullptr, &planes).val();
  }
  return visual_forward_graph(track, nullptr).val();
}

Tensor AsdModel::audio_forward(const MelSpectrogram& mel) {
  return audio_forward_graph(mel).val();
}

FramePredictions AsdModel::context_forward(const Tensor& f_v,
                                           const Tensor& f_a) {
  HeadsOut h = context_forward_graph(ag::constant(f_v), ag::constant(f_a));
  FramePredictions p = h.to_predictions();
  p.validate();
  return p;
}

FramePredictions AsdModel::predict(const FaceTrack& track,
                                   const MelSpectrogram& mel,
                                   const LipTrack* lips) {
  return forward(track, mel, lips).to_predictions();
}

std::vector<std::pair<std::string, Tensor>> AsdModel::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(params_.size());
  for (const auto& [name, v] : params_) out.emplace_back(name, v.val());
  return out;
}

void AsdModel::load_state(const std::map<std::string, Tensor>& tensors) {
  for (auto& [name, v] : params_) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw DataError("checkpoint missing parameter " + name);
    if (!(it->second.shape() == v.val().shape()))
      throw DataError("checkpoint shape mismatch for " + name);
    v.node()->val = it->second;
  }
}

namespace {

void put_u32le(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const json& meta) {
  json hdr;
  hdr["dtype"] = "f64";
  hdr["config"] = cfg.to_json();
  hdr["meta"] = meta;
  json dir = json::array();
  for (const auto& [name, t] : tensors)
    dir.push_back({{"name", name}, {"shape", t.shape()}});
  hdr["tensors"] = dir;
  const std::string hs = hdr.dump();
  std::string out;
  out += "LSRC";
  put_u32le(out, 1);
  put_u32le(out, static_cast<std::uint32_t>(hs.size()));
  out += hs;
  for (const auto& [name, t] : tensors) {
    (void)name;
    const char* raw = reinterpret_cast<const char*>(t.data());
    out.append(raw, static_cast<std::size_t>(t.numel()) * sizeof(double));
  }
  write_file_bytes(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string s = read_file_bytes(path);
  if (s.size() < 12 || s.compare(0, 4, "LSRC") != 0)
    throw DataError("checkpoint: bad magic in " + path);
  auto u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(s[off])) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 1]))
            << 8) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 2]))
            << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 3]))
            << 24);
  };
  if (u32(4) != 1) throw DataError("checkpoint: unsupported version");
  const std::size_t hlen = u32(8);
  if (s.size() < 12 + hlen) throw DataError("checkpoint: truncated header");
  json hdr = json::parse(s.substr(12, hlen));
  if (hdr.at("dtype").get<std::string>() != "f64")
    throw DataError("checkpoint: unsupported dtype");
  Checkpoint ck;
  ck.config = ModelConfig::from_json(hdr.at("config"));
  ck.meta = hdr.at("meta");
  std::size_t off = 12 + hlen;
  for (const auto& e : hdr.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
    Tensor t(shape);
    const std::size_t bytes = static_cast<std::size_t>(t.numel()) * sizeof(double);
    if (off + bytes > s.size())
      throw DataError("checkpoint: truncated tensor " + name);
    std::memcpy(t.data(), s.data() + off, bytes);
    off += bytes;
    ck.tensors.emplace(name, std::move(t));
  }
  return ck;
}

}  // namespace laser
