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

#ifndef LASER_TRAINING_H_
#define LASER_TRAINING_H_

#include <optional>
#include <string>
#include <vector>

#include "laser/asd_model.h"
#include "laser/core_data.h"
#include "laser/losses.h"
#include "laser/rng.h"

namespace laser {

struct AugmentConfig {
  bool flip = true;
  bool crop_resize = true;
  bool rotation = true;
  bool audio_noise_mix = true;
  double p_flip = 0.5;
  double crop_min_scale = 0.8;
  double max_rotation_deg = 10.0;
  double p_mix = 0.5;
  double snr_db_min = 0.0;
  double snr_db_max = 15.0;
};

struct TrainConfig {
  double learning_rate = 5e-5;       // reference setting
  double lr_decay_per_epoch = 0.995; // reference setting (0.5% per epoch)
  int epochs = 5;
  int batch_tracks = 4;
  std::uint64_t seed = 1;
  AugmentConfig augment;
  // Which pass the ASD loss is applied to: "lip_aware" or "both".
  std::string asd_loss_target = "lip_aware";
  bool use_consistency = true;
  int max_track_len = 200;           // reference setting
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_grad_norm = 5.0;  // 0 disables clipping
  int warmup_steps = 50;        // linear lr ramp at the start of a run
  int n_mels = 40;

  void validate() const;
};

// Geometric augmentation primitives; each transforms frames and landmark
// coordinates with the same map (landmarks rounded, out-of-bounds kept and
// dropped later at encoding).
void flip_horizontal(FaceTrack& track, LipTrack& lips);
void rotate_track(FaceTrack& track, LipTrack& lips, double degrees);
void crop_resize_track(FaceTrack& track, LipTrack& lips, double scale,
                       double ox_frac, double oy_frac);
// Adds `noise` to `target` scaled so the mix sits at `snr_db`.
Waveform mix_audio(const Waveform& target, const Waveform& noise,
                   double snr_db);

struct AugmentedSample {
  FaceTrack track;
  LipTrack lips;
  Waveform audio;
};

AugmentedSample augment(const FaceTrack& track, const LipTrack& lips,
                        const Waveform& audio,
                        const std::vector<const Waveform*>& mix_pool,
                        const AugmentConfig& cfg, Rng& rng);

struct StepMetrics {
  double l_asd = 0.0;
  double l_v = 0.0;
  double l_a = 0.0;
  double l_av = 0.0;
  double l_consistency = 0.0;
  double total = 0.0;
  int tracks = 0;
};

// Adam over the model's parameters; holds first/second moments and the
// bias-correction step count, all checkpointable.
class Trainer {
 public:
  Trainer(AsdModel& model, TrainConfig tcfg, LossConfig lcfg);

  // One optimizer update from a batch of (already augmented) samples.
  StepMetrics step(const std::vector<AugmentedSample>& batch);

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t adam_step() const { return adam_step_; }

  std::vector<std::pair<std::string, Tensor>> optimizer_state() const;
  void load_optimizer_state(const std::map<std::string, Tensor>& tensors,
                            std::int64_t adam_step);

 private:
  AsdModel& model_;
  TrainConfig tcfg_;
  LossConfig lcfg_;
  double lr_;
  std::int64_t adam_step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

struct TrainRunResult {
  std::vector<std::string> checkpoint_paths;
  std::string metrics_path;
  std::int64_t steps = 0;
  int epochs_completed = 0;
};

// Full training loop: per-epoch shuffling and augmentation (all derived from
// the seed, so runs are reproducible and resumable at epoch granularity),
// per-epoch lr decay, one checkpoint per epoch, JSON-lines metrics.
// `resume_checkpoint`, when nonempty, restores weights + optimizer state and
// continues from the recorded epoch.
TrainRunResult train(AsdModel& model, const TrainConfig& tcfg,
                     const LossConfig& lcfg,
                     const std::vector<TrackData>& corpus,
                     const std::string& out_dir,
                     const std::string& resume_checkpoint = "",
                     const std::string& metrics_header_extra = "");

}  // namespace laser

#endif  // LASER_TRAINING_H_
