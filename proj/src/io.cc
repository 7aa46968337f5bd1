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

#include "laser/io.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "laser/common.h"

namespace laser {

namespace {

void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t off) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(s[off])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 1]))
          << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 2]))
          << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 3]))
          << 24);
}

std::uint16_t get_u16(const std::string& s, std::size_t off) {
  return static_cast<std::uint16_t>(
      static_cast<unsigned char>(s[off]) |
      (static_cast<unsigned char>(s[off + 1]) << 8));
}

void put_f32(std::string& s, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(s, bits);
}

float get_f32(const std::string& s, std::size_t off) {
  std::uint32_t bits = get_u32(s, off);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

void write_lsrt(const std::string& path, const Tensor& t) {
  if (t.ndim() != 3) throw DataError("lsrt: tensor must be [T,H,W]");
  std::string s;
  s.reserve(16 + static_cast<std::size_t>(t.numel()) * 4);
  s += "LSRT";
  put_u32(s, static_cast<std::uint32_t>(t.dim(0)));
  put_u32(s, static_cast<std::uint32_t>(t.dim(1)));
  put_u32(s, static_cast<std::uint32_t>(t.dim(2)));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    put_f32(s, static_cast<float>(t[i]));
  write_file_bytes(path, s);
}

Tensor read_lsrt(const std::string& path) {
  std::string s = read_file_bytes(path);
  if (s.size() < 16 || s.compare(0, 4, "LSRT") != 0)
    throw DataError("lsrt: bad header in " + path);
  const std::int64_t t = get_u32(s, 4);
  const std::int64_t h = get_u32(s, 8);
  const std::int64_t w = get_u32(s, 12);
  const std::int64_t n = t * h * w;
  if (s.size() != 16 + static_cast<std::size_t>(n) * 4)
    throw DataError("lsrt: truncated data in " + path);
  Tensor out({t, h, w});
  for (std::int64_t i = 0; i < n; ++i)
    out[i] = static_cast<double>(get_f32(s, 16 + static_cast<std::size_t>(i) * 4));
  return out;
}

void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw DataError("wav: non-positive sample rate");
  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 2;
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  put_u32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  put_u32(s, 16);
  put_u16(s, 1);  // PCM
  put_u16(s, 1);  // mono
  put_u32(s, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(s, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(s, 2);
  put_u16(s, 16);
  s += "data";
  put_u32(s, data_bytes);
  for (double x : w.samples) {
    double c = std::clamp(x, -1.0, 1.0);
    int v = static_cast<int>(std::lrint(c * 32767.0));
    put_u16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  write_file_bytes(path, s);
}

Waveform read_wav(const std::string& path) {
  std::string s = read_file_bytes(path);
  if (s.size() < 44 || s.compare(0, 4, "RIFF") != 0 ||
      s.compare(8, 4, "WAVE") != 0)
    throw DataError("wav: not a RIFF/WAVE file: " + path);
  Waveform w;
  std::size_t pos = 12;
  bool have_fmt = false;
  int channels = 0, bits = 0;
  while (pos + 8 <= s.size()) {
    std::string id = s.substr(pos, 4);
    std::uint32_t sz = get_u32(s, pos + 4);
    pos += 8;
    if (pos + sz > s.size()) throw DataError("wav: truncated chunk in " + path);
    if (id == "fmt ") {
      if (sz < 16) throw DataError("wav: short fmt chunk in " + path);
      if (get_u16(s, pos) != 1)
        throw DataError("wav: only PCM supported: " + path);
      channels = get_u16(s, pos + 2);
      w.sample_rate = static_cast<int>(get_u32(s, pos + 4));
      bits = get_u16(s, pos + 14);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw DataError("wav: data before fmt in " + path);
      if (channels != 1 || bits != 16)
        throw DataError("wav: only 16-bit mono supported: " + path);
      const std::size_t count = sz / 2;
      w.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::int16_t v = static_cast<std::int16_t>(get_u16(s, pos + i * 2));
        w.samples[i] = static_cast<double>(v) / 32768.0;
      }
      return w;
    }
    pos += sz + (sz & 1);  // chunks are word-aligned
  }
  throw DataError("wav: no data chunk in " + path);
}

}  // namespace laser
