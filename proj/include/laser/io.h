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

#ifndef LASER_IO_H_
#define LASER_IO_H_

#include <string>
#include <vector>

#include "laser/tensor.h"

namespace laser {

// Frame tensor files: 16-byte header (magic "LSRT", then T, H, W as little-
// endian uint32), followed by T*H*W little-endian float32 values.
void write_lsrt(const std::string& path, const Tensor& t);  // [T,H,W]
Tensor read_lsrt(const std::string& path);

struct Waveform {
  std::vector<double> samples;  // mono, full scale [-1, 1]
  int sample_rate = 0;

  double duration_s() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

// 16-bit PCM mono WAV.
void write_wav(const std::string& path, const Waveform& w);
Waveform read_wav(const std::string& path);

std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);

}  // namespace laser

#endif  // LASER_IO_H_
