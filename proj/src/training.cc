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

#include "laser/training.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "laser/common.h"

namespace laser {

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw ConfigError("train: learning_rate must be > 0");
  if (lr_decay_per_epoch <= 0 || lr_decay_per_epoch > 1)
    throw ConfigError("train: lr decay multiplier must be in (0, 1]");
  if (epochs < 0) throw ConfigError("train: epochs < 0");
  if (batch_tracks < 1) throw ConfigError("train: batch_tracks < 1");
  if (asd_loss_target != "lip_aware" && asd_loss_target != "both")
    throw ConfigError("train: asd_loss_target must be lip_aware or both");
  if (max_track_len < 1) throw ConfigError("train: max_track_len < 1");
}

namespace {

double bilinear(const double* img, std::int64_t s, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(s - 1));
  y = std::clamp(y, 0.0, static_cast<double>(s - 1));
  const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
  const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
  const std::int64_t x1 = std::min(x0 + 1, s - 1);
  const std::int64_t y1 = std::min(y0 + 1, s - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  return img[x0 * s + y0] * (1 - fx) * (1 - fy) +
         img[x1 * s + y0] * fx * (1 - fy) +
         img[x0 * s + y1] * (1 - fx) * fy + img[x1 * s + y1] * fx * fy;
}

double rms_of(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

void flip_horizontal(FaceTrack& track, LipTrack& lips) {
  const std::int64_t t = track.length(), s = track.crop_size();
  for (std::int64_t f = 0; f < t; ++f) {
    double* img = track.frames.data() + f * s * s;
    for (std::int64_t x = 0; x < s / 2; ++x)
      for (std::int64_t y = 0; y < s; ++y)
        std::swap(img[x * s + y], img[(s - 1 - x) * s + y]);
  }
  const int w = static_cast<int>(s);
  for (auto& fr : lips.frames)
    if (fr.has_value())
      for (auto& p : *fr) p[0] = w - 1 - p[0];
}

void rotate_track(FaceTrack& track, LipTrack& lips, double degrees) {
  const std::int64_t t = track.length(), s = track.crop_size();
  const double th = degrees * 3.14159265358979323846 / 180.0;
  const double c = std::cos(th), sn = std::sin(th);
  const double ctr = (static_cast<double>(s) - 1.0) / 2.0;
  Tensor rotated(track.frames.shape());
  for (std::int64_t f = 0; f < t; ++f) {
    const double* src = track.frames.data() + f * s * s;
    double* dst = rotated.data() + f * s * s;
    for (std::int64_t x = 0; x < s; ++x)
      for (std::int64_t y = 0; y < s; ++y) {
        // Inverse map: rotate destination by -theta.
        const double dx = static_cast<double>(x) - ctr;
        const double dy = static_cast<double>(y) - ctr;
        const double sx = c * dx + sn * dy + ctr;
        const double sy = -sn * dx + c * dy + ctr;
        dst[x * s + y] = bilinear(src, s, sx, sy);
      }
  }
  track.frames = std::move(rotated);
  for (auto& fr : lips.frames)
    if (fr.has_value())
      for (auto& p : *fr) {
        const double dx = p[0] - ctr, dy = p[1] - ctr;
        p[0] = static_cast<int>(std::lround(c * dx - sn * dy + ctr));
        p[1] = static_cast<int>(std::lround(sn * dx + c * dy + ctr));
      }
}

void crop_resize_track(FaceTrack& track, LipTrack& lips, double scale,
                       double ox_frac, double oy_frac) {
  const std::int64_t t = track.length(), s = track.crop_size();
  const std::int64_t cs = std::max<std::int64_t>(
      2, static_cast<std::int64_t>(std::lround(static_cast<double>(s) * scale)));
  const std::int64_t ox = static_cast<std::int64_t>(
      std::lround(ox_frac * static_cast<double>(s - cs)));
  const std::int64_t oy = static_cast<std::int64_t>(
      std::lround(oy_frac * static_cast<double>(s - cs)));
  Tensor resized(track.frames.shape());
  const double ratio = static_cast<double>(cs) / static_cast<double>(s);
  for (std::int64_t f = 0; f < t; ++f) {
    const double* src = track.frames.data() + f * s * s;
    double* dst = resized.data() + f * s * s;
    for (std::int64_t x = 0; x < s; ++x)
      for (std::int64_t y = 0; y < s; ++y)
        dst[x * s + y] = bilinear(src, s,
                                  static_cast<double>(ox) + x * ratio,
                                  static_cast<double>(oy) + y * ratio);
  }
  track.frames = std::move(resized);
  for (auto& fr : lips.frames)
    if (fr.has_value())
      for (auto& p : *fr) {
        p[0] = static_cast<int>(std::lround((p[0] - ox) / ratio));
        p[1] = static_cast<int>(std::lround((p[1] - oy) / ratio));
      }
}

Waveform mix_audio(const Waveform& target, const Waveform& noise,
                   double snr_db) {
  const double rt = rms_of(target.samples);
  const double rn = rms_of(noise.samples);
  Waveform out = target;
  if (rn < 1e-12 || rt < 1e-12) return out;
  const double gain = rt / (rn * std::pow(10.0, snr_db / 20.0));
  const std::size_t n = std::min(out.samples.size(), noise.samples.size());
  for (std::size_t i = 0; i < n; ++i) out.samples[i] += gain * noise.samples[i];
  return out;
}

AugmentedSample augment(const FaceTrack& track, const LipTrack& lips,
                        const Waveform& audio,
                        const std::vector<const Waveform*>& mix_pool,
                        const AugmentConfig& cfg, Rng& rng) {
  AugmentedSample out{track, lips, audio};
  if (cfg.flip && rng.bernoulli(cfg.p_flip))
    flip_horizontal(out.track, out.lips);
  if (cfg.crop_resize) {
    const double scale = rng.uniform(cfg.crop_min_scale, 1.0);
    const double oxf = rng.uniform();
    const double oyf = rng.uniform();
    crop_resize_track(out.track, out.lips, scale, oxf, oyf);
  }
  if (cfg.rotation) {
    const double deg = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    rotate_track(out.track, out.lips, deg);
  }
  if (cfg.audio_noise_mix && !mix_pool.empty() && rng.bernoulli(cfg.p_mix)) {
    const auto pick = rng.uniform_index(mix_pool.size());
    const double snr = rng.uniform(cfg.snr_db_min, cfg.snr_db_max);
    out.audio = mix_audio(out.audio, *mix_pool[pick], snr);
  }
  return out;
}

Trainer::Trainer(AsdModel& model, TrainConfig tcfg, LossConfig lcfg)
    : model_(model), tcfg_(std::move(tcfg)), lcfg_(lcfg),
      lr_(tcfg_.learning_rate) {
  tcfg_.validate();
  lcfg_.validate();
  for (auto& [name, p] : model_.parameters()) {
    (void)name;
    m_.emplace_back(p.val().shape());
    v_.emplace_back(p.val().shape());
  }
}

StepMetrics Trainer::step(const std::vector<AugmentedSample>& batch) {
  if (batch.empty()) throw DataError("train_step: empty batch");
  model_.zero_grads();
  StepMetrics metrics;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool lip_model = model_.config().integration != LipIntegration::kNone;

  for (const AugmentedSample& sample : batch) {
    MelSpectrogram mel =
        compute_mel(sample.audio, sample.track, tcfg_.n_mels);
    ag::Value root;
    AsdLossTerms asd;
    std::optional<ag::Value> cons;
    const bool dual = lip_model && tcfg_.use_consistency &&
                      !sample.lips.all_absent();
    if (dual) {
      AsdModel::DualPass dp =
          model_.forward_dual(sample.track, mel, sample.lips);
      asd = asd_loss_graph(dp.lip_aware.probs_av, dp.lip_aware.probs_v,
                           dp.lip_aware.probs_a, sample.track.labels, lcfg_);
      if (tcfg_.asd_loss_target == "both") {
        AsdLossTerms asd2 =
            asd_loss_graph(dp.no_lip.probs_av, dp.no_lip.probs_v,
                           dp.no_lip.probs_a, sample.track.labels, lcfg_);
        asd.total = ag::scale(ag::add(asd.total, asd2.total), 0.5);
        asd.l_v = ag::scale(ag::add(asd.l_v, asd2.l_v), 0.5);
        asd.l_a = ag::scale(ag::add(asd.l_a, asd2.l_a), 0.5);
        asd.l_av = ag::scale(ag::add(asd.l_av, asd2.l_av), 0.5);
      }
      cons = consistency_loss_graph(dp.no_lip.probs_av,
                                    dp.lip_aware.probs_av);
    } else {
      HeadsOut h = model_.forward(sample.track, mel,
                                  lip_model ? &sample.lips : nullptr);
      asd = asd_loss_graph(h.probs_av, h.probs_v, h.probs_a,
                           sample.track.labels, lcfg_);
    }
    ag::Value total = total_loss_graph(asd.total, cons, lcfg_);
    const double tv = total.scalar();
    if (!std::isfinite(tv))
      throw NumericError("train_step: non-finite loss on track " +
                         sample.track.track_id);
    metrics.l_asd += asd.total.scalar();
    metrics.l_v += asd.l_v.scalar();
    metrics.l_a += asd.l_a.scalar();
    metrics.l_av += asd.l_av.scalar();
    metrics.l_consistency += cons ? cons->scalar() : 0.0;
    metrics.total += tv;
    root = ag::scale(total, inv_b);
    ag::backward(root);
  }

  metrics.l_asd *= inv_b;
  metrics.l_v *= inv_b;
  metrics.l_a *= inv_b;
  metrics.l_av *= inv_b;
  metrics.l_consistency *= inv_b;
  metrics.total *= inv_b;
  metrics.tracks = static_cast<int>(batch.size());

  // Global-norm gradient clip.
  if (tcfg_.clip_grad_norm > 0) {
    double sq = 0.0;
    for (auto& [name, p] : model_.parameters()) {
      (void)name;
      if (!p.node()->grad.defined()) continue;
      const Tensor& g = p.node()->grad;
      for (std::int64_t j = 0; j < g.numel(); ++j) sq += g[j] * g[j];
    }
    const double norm = std::sqrt(sq);
    if (norm > tcfg_.clip_grad_norm) {
      const double scale = tcfg_.clip_grad_norm / norm;
      for (auto& [name, p] : model_.parameters()) {
        (void)name;
        if (!p.node()->grad.defined()) continue;
        Tensor& g = p.node()->grad;
        for (std::int64_t j = 0; j < g.numel(); ++j) g[j] *= scale;
      }
    }
  }

  // Adam update with linear warmup.
  ++adam_step_;
  const double warm =
      tcfg_.warmup_steps > 0 && adam_step_ < tcfg_.warmup_steps
          ? static_cast<double>(adam_step_) / tcfg_.warmup_steps
          : 1.0;
  const double b1 = tcfg_.adam_beta1, b2 = tcfg_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_step_));
  auto& params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ag::Value& p = params[i].second;
    if (!p.node()->grad.defined()) continue;
    const Tensor& g = p.node()->grad;
    Tensor& pm = m_[i];
    Tensor& pv = v_[i];
    Tensor& w = p.node()->val;
    for (std::int64_t j = 0; j < g.numel(); ++j) {
      pm[j] = b1 * pm[j] + (1.0 - b1) * g[j];
      pv[j] = b2 * pv[j] + (1.0 - b2) * g[j] * g[j];
      w[j] -= warm * lr_ * (pm[j] / c1) /
                (std::sqrt(pv[j] / c2) + tcfg_.adam_eps);
    }
  }
  return metrics;
}

std::vector<std::pair<std::string, Tensor>> Trainer::optimizer_state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  const auto& params =
      const_cast<AsdModel&>(model_).parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.emplace_back("adam.m." + params[i].first, m_[i]);
    out.emplace_back("adam.v." + params[i].first, v_[i]);
  }
  return out;
}

void Trainer::load_optimizer_state(const std::map<std::string, Tensor>& t,
                                   std::int64_t adam_step) {
  auto& params = model_.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto im = t.find("adam.m." + params[i].first);
    auto iv = t.find("adam.v." + params[i].first);
    if (im == t.end() || iv == t.end())
      throw DataError("checkpoint missing optimizer state for " +
                      params[i].first);
    m_[i] = im->second;
    v_[i] = iv->second;
  }
  adam_step_ = adam_step;
}

namespace {

void truncate_sample(TrackData& d, int max_len) {
  const std::int64_t t = d.track.length();
  if (t <= max_len) return;
  const std::int64_t s = d.track.crop_size();
  Tensor frames({max_len, s, s});
  std::copy(d.track.frames.data(), d.track.frames.data() + max_len * s * s,
            frames.data());
  d.track.frames = std::move(frames);
  d.track.labels.resize(static_cast<std::size_t>(max_len));
  d.lips.frames.resize(static_cast<std::size_t>(max_len));
}

}  // namespace

TrainRunResult train(AsdModel& model, const TrainConfig& tcfg,
                     const LossConfig& lcfg,
                     const std::vector<TrackData>& corpus,
                     const std::string& out_dir,
                     const std::string& resume_checkpoint,
                     const std::string& metrics_header_extra) {
  tcfg.validate();
  if (corpus.empty()) throw DataError("train: empty corpus");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  Trainer trainer(model, tcfg, lcfg);
  int start_epoch = 0;
  std::int64_t global_step = 0;
  if (!resume_checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(resume_checkpoint);
    model.load_state(ck.tensors);
    trainer.load_optimizer_state(ck.tensors,
                                 ck.meta.at("adam_step").get<std::int64_t>());
    start_epoch = ck.meta.at("epochs_completed").get<int>();
    global_step = ck.meta.at("global_step").get<std::int64_t>();
  }

  TrainRunResult result;
  result.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  std::ofstream metrics(result.metrics_path, std::ios::trunc);
  if (!metrics) throw DataError("train: cannot write " + result.metrics_path);
  if (!metrics_header_extra.empty()) metrics << metrics_header_extra << "\n";

  auto save_epoch_checkpoint = [&](int epochs_completed, double lr) {
    auto tensors = model.state();
    for (auto& kv : trainer.optimizer_state()) tensors.push_back(kv);
    nlohmann::json meta = {{"epochs_completed", epochs_completed},
                           {"global_step", global_step},
                           {"adam_step", trainer.adam_step()},
                           {"lr", lr},
                           {"seed", tcfg.seed}};
    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_epoch_%03d.lsrc",
                  epochs_completed);
    const std::string path = (fs::path(out_dir) / name).string();
    save_checkpoint(path, model.config(), tensors, meta);
    result.checkpoint_paths.push_back(path);
  };

  if (start_epoch == 0) save_epoch_checkpoint(0, tcfg.learning_rate);

  Rng base(tcfg.seed);
  std::vector<const Waveform*> mix_pool;
  if (tcfg.augment.audio_noise_mix)
    for (const auto& d : corpus) mix_pool.push_back(&d.audio);

  for (int epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
    const double lr =
        tcfg.learning_rate * std::pow(tcfg.lr_decay_per_epoch, epoch);
    trainer.set_lr(lr);
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = base.fork(0x5eaf00d + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);

    for (std::size_t b0 = 0; b0 < order.size();
         b0 += static_cast<std::size_t>(tcfg.batch_tracks)) {
      std::vector<AugmentedSample> batch;
      const std::size_t b1 =
          std::min(order.size(), b0 + static_cast<std::size_t>(tcfg.batch_tracks));
      for (std::size_t bi = b0; bi < b1; ++bi) {
        const std::size_t idx = order[bi];
        TrackData d = corpus[idx];
        truncate_sample(d, tcfg.max_track_len);
        Rng aug_rng = base.fork((static_cast<std::uint64_t>(epoch) << 32) ^
                                (0xa06 + idx));
        batch.push_back(augment(d.track, d.lips, d.audio, mix_pool,
                                tcfg.augment, aug_rng));
      }
      StepMetrics sm = trainer.step(batch);
      ++global_step;
      nlohmann::json rec = {{"epoch", epoch},
                            {"step", global_step},
                            {"l_asd", sm.l_asd},
                            {"l_v", sm.l_v},
                            {"l_a", sm.l_a},
                            {"l_av", sm.l_av},
                            {"l_consistency", sm.l_consistency},
                            {"lr", lr}};
      metrics << rec.dump() << "\n";
    }
    save_epoch_checkpoint(epoch + 1, lr);
    result.epochs_completed = epoch + 1;
  }
  result.steps = global_step;
  return result;
}

}  // namespace laser
