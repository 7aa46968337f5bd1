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

#ifndef LASER_RUN_CONFIG_H_
#define LASER_RUN_CONFIG_H_

#include <string>

#include <json.hpp>

#include "laser/asd_model.h"
#include "laser/bench_curation.h"
#include "laser/eval_harness.h"
#include "laser/losses.h"
#include "laser/synthetic_corpus.h"
#include "laser/training.h"

namespace laser {

// Merged configuration tree for the CLI. Parsing starts from the documented
// defaults, applies only known keys, and rejects anything unknown.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  SynthConfig synth;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  EvalProtocolConfig eval;
  CurationConfig curation;
};

RunConfig parse_run_config(const nlohmann::json& j);

struct LoadedRunConfig {
  RunConfig config;
  std::string raw_bytes;   // exact file contents, for fingerprinting
  std::string fnv1a64_hex; // hash of raw_bytes
};

LoadedRunConfig load_run_config(const std::string& path);

// The fully resolved tree (defaults filled in), as embedded in artifacts.
nlohmann::json run_config_to_json(const RunConfig& c);

}  // namespace laser

#endif  // LASER_RUN_CONFIG_H_
