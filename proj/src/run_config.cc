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

#include "laser/run_config.h"

#include <set>

#include "laser/common.h"
#include "laser/io.h"

namespace laser {

using nlohmann::json;

namespace {

// Applies known keys via the callbacks in `fields`; any other key is a
// config error naming its path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw ConfigError("config: " + path_ + " must be an object");
  }

  template <typename T>
  void field(const char* key, T& target) {
    known_.insert(key);
    if (j_.contains(key)) {
      try {
        target = j_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw ConfigError("config: bad value for " + path_ + "." + key + ": " +
                          e.what());
      }
    }
  }

  bool subsection(const char* key, json* out) {
    known_.insert(key);
    if (!j_.contains(key)) return false;
    *out = j_.at(key);
    return true;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      (void)value;
      if (!known_.count(key))
        throw ConfigError("config: unknown key " + path_ + "." + key);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

void parse_synth(const json& j, SynthConfig& c) {
  Section s(j, "synth");
  s.field("num_tracks", c.num_tracks);
  s.field("t_min", c.t_min);
  s.field("t_max", c.t_max);
  s.field("fps", c.fps);
  s.field("crop_size", c.crop_size);
  s.field("speaking_fraction", c.speaking_fraction);
  s.field("noise_rms", c.noise_rms);
  s.field("landmark_count", c.landmark_count);
  s.field("sample_rate", c.sample_rate);
  s.field("tracks_per_video", c.tracks_per_video);
  s.field("silence_gap_prob", c.silence_gap_prob);
  s.finish();
}

void parse_model(const json& j, ModelConfig& c) {
  Section s(j, "model");
  json sub;
  if (s.subsection("visual", &sub)) {
    Section v(sub, "model.visual");
    v.field("conv3d_out_channels", c.visual.conv3d_out_channels);
    v.field("resnet_stage_widths", c.visual.resnet_stage_widths);
    v.field("vtcn_blocks", c.visual.vtcn_blocks);
    v.field("embed_dim", c.visual.embed_dim);
    v.field("lip_injection_stage", c.visual.lip_injection_stage);
    v.finish();
  }
  if (s.subsection("audio", &sub)) {
    Section a(sub, "model.audio");
    a.field("embed_dim", c.audio.embed_dim);
    a.field("n_mels", c.audio.n_mels);
    a.finish();
  }
  if (s.subsection("context", &sub)) {
    Section g(sub, "model.context");
    g.field("attention_heads", c.context.attention_heads);
    g.field("hidden_dim", c.context.hidden_dim);
    g.field("positional_encoding", c.context.positional_encoding);
    g.finish();
  }
  std::string integration = to_string(c.integration);
  s.field("integration", integration);
  c.integration = lip_integration_from_string(integration);
  s.field("landmark_count", c.landmark_count);
  s.field("aggregated_channels", c.aggregated_channels);
  s.field("crop_size", c.crop_size);
  s.field("ldi_width", c.ldi_width);
  s.finish();
}

void parse_loss(const json& j, LossConfig& c) {
  Section s(j, "loss");
  s.field("lambda_av", c.lambda_av);
  s.field("lambda_a", c.lambda_a);
  s.field("lambda_v", c.lambda_v);
  s.field("lambda_c", c.lambda_c);
  s.finish();
}

void parse_train(const json& j, TrainConfig& c) {
  Section s(j, "train");
  s.field("learning_rate", c.learning_rate);
  s.field("lr_decay_per_epoch", c.lr_decay_per_epoch);
  s.field("epochs", c.epochs);
  s.field("batch_tracks", c.batch_tracks);
  s.field("asd_loss_target", c.asd_loss_target);
  s.field("use_consistency", c.use_consistency);
  s.field("max_track_len", c.max_track_len);
  s.field("adam_beta1", c.adam_beta1);
  s.field("adam_beta2", c.adam_beta2);
  s.field("adam_eps", c.adam_eps);
  s.field("clip_grad_norm", c.clip_grad_norm);
  s.field("warmup_steps", c.warmup_steps);
  s.field("n_mels", c.n_mels);
  json sub;
  if (s.subsection("augment", &sub)) {
    Section a(sub, "train.augment");
    a.field("flip", c.augment.flip);
    a.field("crop_resize", c.augment.crop_resize);
    a.field("rotation", c.augment.rotation);
    a.field("audio_noise_mix", c.augment.audio_noise_mix);
    a.field("p_flip", c.augment.p_flip);
    a.field("crop_min_scale", c.augment.crop_min_scale);
    a.field("max_rotation_deg", c.augment.max_rotation_deg);
    a.field("p_mix", c.augment.p_mix);
    a.field("snr_db_min", c.augment.snr_db_min);
    a.field("snr_db_max", c.augment.snr_db_max);
    a.finish();
  }
  s.finish();
}

void parse_eval(const json& j, EvalProtocolConfig& c) {
  Section s(j, "eval");
  s.field("protocol", c.protocol);
  s.field("delays", c.delays);
  s.field("rms_threshold", c.rms_threshold);
  s.field("with_lte", c.with_lte);
  s.field("vad_threshold", c.vad_threshold);
  s.field("vad_frame_ms", c.vad_frame_ms);
  s.field("n_mels", c.n_mels);
  s.finish();
}

void parse_curation(const json& j, CurationConfig& c) {
  Section s(j, "curation");
  s.field("min_track_seconds", c.min_track_seconds);
  s.field("rms_threshold", c.rms_threshold);
  s.field("vad", c.vad);
  s.field("vad_threshold", c.vad_threshold);
  s.field("vad_frame_ms", c.vad_frame_ms);
  s.finish();
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Section root(j, "<root>");
  root.field("seed", c.seed);
  root.field("out_dir", c.out_dir);
  json sub;
  if (root.subsection("synth", &sub)) parse_synth(sub, c.synth);
  if (root.subsection("model", &sub)) parse_model(sub, c.model);
  if (root.subsection("loss", &sub)) parse_loss(sub, c.loss);
  if (root.subsection("train", &sub)) parse_train(sub, c.train);
  if (root.subsection("eval", &sub)) parse_eval(sub, c.eval);
  if (root.subsection("curation", &sub)) parse_curation(sub, c.curation);
  root.finish();
  // Seeds flow from the top-level seed unless a section overrides later.
  c.synth.seed = c.seed;
  c.train.seed = c.seed;
  c.eval.seed = c.seed;
  c.model.validate();
  c.loss.validate();
  c.train.validate();
  c.eval.validate();
  c.curation.validate();
  c.synth.validate();
  return c;
}

LoadedRunConfig load_run_config(const std::string& path) {
  LoadedRunConfig out;
  out.raw_bytes = read_file_bytes(path);
  json j;
  try {
    j = json::parse(out.raw_bytes);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
  }
  out.config = parse_run_config(j);
  out.fnv1a64_hex = laser::fnv1a64_hex(out.raw_bytes);
  return out;
}

json run_config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["synth"] = {{"num_tracks", c.synth.num_tracks},
                {"t_min", c.synth.t_min},
                {"t_max", c.synth.t_max},
                {"fps", c.synth.fps},
                {"crop_size", c.synth.crop_size},
                {"speaking_fraction", c.synth.speaking_fraction},
                {"noise_rms", c.synth.noise_rms},
                {"landmark_count", c.synth.landmark_count},
                {"sample_rate", c.synth.sample_rate},
                {"tracks_per_video", c.synth.tracks_per_video},
                {"silence_gap_prob", c.synth.silence_gap_prob}};
  j["model"] = c.model.to_json();
  j["loss"] = {{"lambda_av", c.loss.lambda_av},
               {"lambda_a", c.loss.lambda_a},
               {"lambda_v", c.loss.lambda_v},
               {"lambda_c", c.loss.lambda_c}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"lr_decay_per_epoch", c.train.lr_decay_per_epoch},
                {"epochs", c.train.epochs},
                {"batch_tracks", c.train.batch_tracks},
                {"asd_loss_target", c.train.asd_loss_target},
                {"use_consistency", c.train.use_consistency},
                {"max_track_len", c.train.max_track_len},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"clip_grad_norm", c.train.clip_grad_norm},
                {"warmup_steps", c.train.warmup_steps},
                {"n_mels", c.train.n_mels},
                {"augment",
                 {{"flip", c.train.augment.flip},
                  {"crop_resize", c.train.augment.crop_resize},
                  {"rotation", c.train.augment.rotation},
                  {"audio_noise_mix", c.train.augment.audio_noise_mix},
                  {"p_flip", c.train.augment.p_flip},
                  {"crop_min_scale", c.train.augment.crop_min_scale},
                  {"max_rotation_deg", c.train.augment.max_rotation_deg},
                  {"p_mix", c.train.augment.p_mix},
                  {"snr_db_min", c.train.augment.snr_db_min},
                  {"snr_db_max", c.train.augment.snr_db_max}}}};
  j["eval"] = {{"protocol", c.eval.protocol},
               {"delays", c.eval.delays},
               {"rms_threshold", c.eval.rms_threshold},
               {"with_lte", c.eval.with_lte},
               {"vad_threshold", c.eval.vad_threshold},
               {"vad_frame_ms", c.eval.vad_frame_ms},
               {"n_mels", c.eval.n_mels}};
  j["curation"] = {{"min_track_seconds", c.curation.min_track_seconds},
                   {"rms_threshold", c.curation.rms_threshold},
                   {"vad", c.curation.vad},
                   {"vad_threshold", c.curation.vad_threshold},
                   {"vad_frame_ms", c.curation.vad_frame_ms}};
  return j;
}

}  // namespace laser
