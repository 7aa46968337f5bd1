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

#ifndef LASER_LOSSES_H_
#define LASER_LOSSES_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "laser/core_data.h"
#include "laser/graph.h"

namespace laser {

struct LossConfig {
  double lambda_av = 1.0;  // reference settings
  double lambda_a = 0.4;
  double lambda_v = 0.4;
  double lambda_c = 1.0;

  void validate() const;
};

// Floor applied inside the logarithms of both loss families.
inline constexpr double kLossEps = 1e-8;

struct AsdLossTerms {
  ag::Value total;
  ag::Value l_v;
  ag::Value l_a;
  ag::Value l_av;
};

// Weighted sum of the three heads' mean per-frame cross-entropies.
// Probability rows are checked to sum to 1 within `tol`.
AsdLossTerms asd_loss_graph(const ag::Value& probs_av, const ag::Value& probs_v,
                            const ag::Value& probs_a,
                            const std::vector<std::uint8_t>& labels,
                            const LossConfig& cfg, double tol = 1e-6);

// Mean-over-frames KL(p || q). q is detached inside: no gradient reaches
// parameters through the lip-aware branch.
ag::Value consistency_loss_graph(const ag::Value& p_nolip,
                                 const ag::Value& q_lip);

ag::Value total_loss_graph(const ag::Value& asd,
                           const std::optional<ag::Value>& consistency,
                           const LossConfig& cfg);

// Plain-number versions (same computation run on constants).
struct AsdLossBreakdown {
  double total = 0.0;
  double l_v = 0.0;
  double l_a = 0.0;
  double l_av = 0.0;
};

AsdLossBreakdown asd_loss(const FramePredictions& preds,
                          const std::vector<std::uint8_t>& labels,
                          const LossConfig& cfg);
double consistency_loss(const Tensor& p_nolip, const Tensor& q_lip);
double total_loss(double asd, std::optional<double> consistency,
                  const LossConfig& cfg);

}  // namespace laser

#endif  // LASER_LOSSES_H_
