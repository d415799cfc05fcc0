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

#pragma once

#include <filesystem>
#include <vector>

namespace bioctx {

struct AudioClip {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate = 22050;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  std::size_t frames = 0;
  double duration() const {
    return sample_rate > 0 ? static_cast<double>(frames) / sample_rate : 0.0;
  }
};

// RIFF/WAVE PCM16 only. Multichannel input is averaged to mono and samples
// are scaled by 1/32768. Throws FormatError for unsupported encodings and
// IoError for missing or truncated files.
AudioClip read_wav(const std::filesystem::path& path);

// Header-only probe, used for corpus bookkeeping.
WavInfo read_wav_info(const std::filesystem::path& path);

// Mono PCM16; samples are clipped to the representable range.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

}  // namespace bioctx
