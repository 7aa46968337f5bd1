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

#include "laser/losses.h"

#include <cmath>

#include "laser/common.h"

namespace laser {

using ag::Value;

void LossConfig::validate() const {
  if (lambda_av < 0 || lambda_a < 0 || lambda_v < 0 || lambda_c < 0)
    throw ConfigError("loss weights must be nonnegative");
}

namespace {

void check_rows_sum_to_one(const Tensor& probs, double tol, const char* head) {
  if (probs.ndim() != 2 || probs.dim(1) != 2)
    throw NumericError(std::string("loss: ") + head + " must be [T,2]");
  for (std::int64_t r = 0; r < probs.dim(0); ++r) {
    const double s = probs[r * 2] + probs[r * 2 + 1];
    if (std::abs(s - 1.0) > tol)
      throw NumericError(std::string("loss: ") + head + " row " +
                         std::to_string(r) + " sums to " + std::to_string(s));
  }
}

// Mean per-frame cross-entropy of a [T,2] probability tensor.
Value ce_from_probs(const Value& probs, const std::vector<std::uint8_t>& labels) {
  const std::int64_t t = probs.val().dim(0);
  if (static_cast<std::int64_t>(labels.size()) != t)
    throw NumericError("loss: labels length mismatch");
  Tensor onehot({t, 2});
  for (std::int64_t i = 0; i < t; ++i)
    onehot[i * 2 + (labels[static_cast<std::size_t>(i)] ? 1 : 0)] = 1.0;
  Value picked = ag::mul(ag::constant(std::move(onehot)),
                         ag::log_floor(probs, kLossEps));
  return ag::scale(ag::sum_all(picked), -1.0 / static_cast<double>(t));
}

}  // namespace

AsdLossTerms asd_loss_graph(const Value& probs_av, const Value& probs_v,
                            const Value& probs_a,
                            const std::vector<std::uint8_t>& labels,
                            const LossConfig& cfg, double tol) {
  cfg.validate();
  check_rows_sum_to_one(probs_av.val(), tol, "probs_av");
  check_rows_sum_to_one(probs_v.val(), tol, "probs_v");
  check_rows_sum_to_one(probs_a.val(), tol, "probs_a");
  AsdLossTerms out;
  out.l_av = ce_from_probs(probs_av, labels);
  out.l_v = ce_from_probs(probs_v, labels);
  out.l_a = ce_from_probs(probs_a, labels);
  out.total = ag::add(ag::add(ag::scale(out.l_v, cfg.lambda_v),
                              ag::scale(out.l_a, cfg.lambda_a)),
                      ag::scale(out.l_av, cfg.lambda_av));
  return out;
}

Value consistency_loss_graph(const Value& p_nolip, const Value& q_lip) {
  if (!p_nolip.val().same_shape(q_lip.val()))
    throw NumericError("consistency_loss: shape mismatch");
  const std::int64_t t = p_nolip.val().dim(0);
  Value q = ag::detach(q_lip);  // stop-gradient on the lip-aware branch
  Value per_entry = ag::mul(
      p_nolip, ag::sub(ag::log_floor(p_nolip, kLossEps),
                       ag::log_floor(q, kLossEps)));
  return ag::scale(ag::sum_all(per_entry), 1.0 / static_cast<double>(t));
}

Value total_loss_graph(const Value& asd,
                       const std::optional<Value>& consistency,
                       const LossConfig& cfg) {
  if (!consistency.has_value()) return asd;
  return ag::add(asd, ag::scale(*consistency, cfg.lambda_c));
}

AsdLossBreakdown asd_loss(const FramePredictions& preds,
                          const std::vector<std::uint8_t>& labels,
                          const LossConfig& cfg) {
  AsdLossTerms t = asd_loss_graph(ag::constant(preds.probs_av),
                                  ag::constant(preds.probs_v),
                                  ag::constant(preds.probs_a), labels, cfg);
  return {t.total.scalar(), t.l_v.scalar(), t.l_a.scalar(), t.l_av.scalar()};
}

double consistency_loss(const Tensor& p_nolip, const Tensor& q_lip) {
  return consistency_loss_graph(ag::constant(p_nolip), ag::constant(q_lip))
      .scalar();
}

double total_loss(double asd, std::optional<double> consistency,
                  const LossConfig& cfg) {
  cfg.validate();
  return consistency.has_value() ? asd + cfg.lambda_c * *consistency : asd;
}

}  // namespace laser
