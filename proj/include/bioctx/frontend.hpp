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
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bioctx/audio.hpp"

namespace bioctx {

enum class FreqScale { kMel, kErb, kLinear };

struct Spectrogram {
  Eigen::MatrixXd mags;             // bands x frames, >= 0
  double hop = 0.0;                 // seconds between frames
  std::vector<double> band_centers; // Hz, strictly increasing
  FreqScale scale = FreqScale::kLinear;

  Eigen::Index n_bands() const { return mags.rows(); }
  Eigen::Index n_frames() const { return mags.cols(); }
};

inline constexpr int kFftSize = 1024;
inline constexpr int kHopSize = 512;

// Number of full STFT frames: floor((n - 1024) / 512) + 1, or 0.
Eigen::Index stft_frame_count(std::size_t n_samples);

// |STFT| with a periodic Hann window; (kFftSize/2 + 1) x frames.
Eigen::MatrixXd stft_magnitude(const std::vector<double>& samples);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
double hz_to_erb_number(double hz);
double erb_number_to_hz(double erb);

// Peak-normalised triangular weights (bands x bins). Where a triangle is
// narrower than the bin spacing it degrades to linear interpolation of the
// spectrum at the band center, so no band is empty.
Eigen::MatrixXd triangular_filterbank(const std::vector<double>& centers_hz,
                                      const std::vector<double>& lower_hz,
                                      const std::vector<double>& upper_hz,
                                      double (*to_scale)(double),
                                      int sample_rate);

struct MelOptions {
  int n_bands = 40;
};

// Bands spaced evenly on the mel scale between 0 Hz and Nyquist.
Spectrogram mel_spectrogram(const AudioClip& clip, const MelOptions& opts = {});

// Per band: max(0, x - median over frames).
Spectrogram median_clip(const Spectrogram& spec);

// log(1 + x), elementwise.
Spectrogram log_compress(const Spectrogram& spec);

struct ErbOptions {
  int n_bands = 250;
  double min_hz = 5.0;
  double max_hz = 10800.0;
};

Spectrogram erb_spectrogram(const AudioClip& clip, const ErbOptions& opts = {});

struct PreemphasisOptions {
  double floor = 0.05;
  double reference_hz = 10800.0;
};

// Linear-in-frequency gain g(f) = max(floor, f / reference_hz).
Spectrogram preemphasize(const Spectrogram& spec,
                         const PreemphasisOptions& opts = {});

// Rows are bands (lowest first).
void write_spectrogram_csv(const std::filesystem::path& path,
                           const Spectrogram& spec);
// 16-bit grayscale, 80 dB range, lowest band at the bottom.
void write_spectrogram_png(const std::filesystem::path& path,
                           const Spectrogram& spec);

}  // namespace bioctx
