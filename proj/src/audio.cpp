// Copyright 2026 The bioctx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bioctx/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "bioctx/error.hpp"

namespace bioctx {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

struct ParsedHeader {
  WavInfo info;
  std::streamoff data_offset = 0;
  std::uint32_t data_bytes = 0;
};

// Walks the chunk list up to the data chunk.
ParsedHeader parse_header(std::ifstream& in, const std::filesystem::path& path) {
  const std::string name = path.string();
  std::array<unsigned char, 12> riff{};
  if (!in.read(reinterpret_cast<char*>(riff.data()), riff.size()))
    throw IoError(name + ": truncated RIFF header");
  if (std::memcmp(riff.data(), "RIFF", 4) != 0 ||
      std::memcmp(riff.data() + 8, "WAVE", 4) != 0)
    throw FormatError(name + ": not a RIFF/WAVE file");

  ParsedHeader out;
  bool have_fmt = false;
  int bits = 0;
  while (true) {
    std::array<unsigned char, 8> chunk{};
    if (!in.read(reinterpret_cast<char*>(chunk.data()), chunk.size()))
      throw IoError(name + ": missing data chunk");
    const std::uint32_t size = le32(chunk.data() + 4);
    if (std::memcmp(chunk.data(), "fmt ", 4) == 0) {
      if (size < 16) throw FormatError(name + ": short fmt chunk");
      std::vector<unsigned char> fmt(size);
      if (!in.read(reinterpret_cast<char*>(fmt.data()), size))
        throw IoError(name + ": truncated fmt chunk");
      std::uint16_t tag = le16(fmt.data());
      if (tag == 0xFFFE && size >= 26) tag = le16(fmt.data() + 24);
      if (tag != 1) throw FormatError(name + ": unsupported codec (not PCM)");
      out.info.channels = le16(fmt.data() + 2);
      out.info.sample_rate = static_cast<int>(le32(fmt.data() + 4));
      bits = le16(fmt.data() + 14);
      if (bits != 16)
        throw FormatError(name + ": unsupported bit depth " +
                          std::to_string(bits));
      if (out.info.channels < 1 || out.info.sample_rate <= 0)
        throw FormatError(name + ": invalid channel count or sample rate");
      have_fmt = true;
      if (size % 2) in.ignore(1);
    } else if (std::memcmp(chunk.data(), "data", 4) == 0) {
      if (!have_fmt) throw FormatError(name + ": data chunk before fmt chunk");
      out.data_offset = in.tellg();
      out.data_bytes = size;
      out.info.frames = size / (2u * static_cast<unsigned>(out.info.channels));
      return out;
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
      if (!in) throw IoError(name + ": truncated chunk list");
    }
  }
}

}  // namespace

WavInfo read_wav_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  return parse_header(in, path).info;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  const ParsedHeader hdr = parse_header(in, path);
  const int channels = hdr.info.channels;
  const std::size_t frames = hdr.info.frames;

  std::vector<unsigned char> raw(frames * channels * 2);
  if (!in.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size())))
    throw IoError(path.string() + ": truncated data chunk");

  AudioClip clip;
  clip.sample_rate = hdr.info.sample_rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int ch = 0; ch < channels; ++ch) {
      const unsigned char* p = raw.data() + (i * channels + ch) * 2;
      acc += static_cast<std::int16_t>(le16(p));
    }
    clip.samples[i] = acc / channels / 32768.0;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw ArgumentError("write_wav: sample_rate <= 0");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");

  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_bytes = n * 2;
  const auto sr = static_cast<std::uint32_t>(clip.sample_rate);
  std::vector<unsigned char> buf;
  buf.reserve(44 + data_bytes);
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back((v >> (8 * i)) & 0xff);
  };
  auto put16 = [&](std::uint16_t v) {
    buf.push_back(v & 0xff);
    buf.push_back((v >> 8) & 0xff);
  };
  auto tag = [&](const char* s) { buf.insert(buf.end(), s, s + 4); };

  tag("RIFF");
  put32(36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  put32(16);
  put16(1);
  put16(1);
  put32(sr);
  put32(sr * 2);
  put16(2);
  put16(16);
  tag("data");
  put32(data_bytes);
  for (double s : clip.samples) {
    const double scaled = std::round(s * 32768.0);
    const double clamped = std::clamp(scaled, -32768.0, 32767.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(clamped)));
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace bioctx
