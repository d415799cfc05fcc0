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

#include "bioctx/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <fmt/format.h>
#include <png.h>

#include "bioctx/diag.hpp"
#include "bioctx/error.hpp"

namespace bioctx {
namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<std::size_t>(n));
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double magnitude(int k) const { return std::hypot(out_[k][0], out_[k][1]); }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (n % 2 == 1) return upper;
  const double lower =
      *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

Spectrogram apply_bank(const AudioClip& clip, const Eigen::MatrixXd& bank,
                       std::vector<double> centers, FreqScale scale) {
  Spectrogram spec;
  spec.mags = bank * stft_magnitude(clip.samples);
  spec.hop = static_cast<double>(kHopSize) / clip.sample_rate;
  spec.band_centers = std::move(centers);
  spec.scale = scale;
  return spec;
}

}  // namespace

Eigen::Index stft_frame_count(std::size_t n_samples) {
  if (n_samples < static_cast<std::size_t>(kFftSize)) return 0;
  return static_cast<Eigen::Index>((n_samples - kFftSize) / kHopSize + 1);
}

Eigen::MatrixXd stft_magnitude(const std::vector<double>& samples) {
  const Eigen::Index frames = stft_frame_count(samples.size());
  const int bins = kFftSize / 2 + 1;
  Eigen::MatrixXd mags(bins, frames);
  std::vector<double> window(kFftSize);
  for (int n = 0; n < kFftSize; ++n)
    window[static_cast<std::size_t>(n)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kFftSize);
  RealFft fft(kFftSize);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const std::size_t offset = static_cast<std::size_t>(t) * kHopSize;
    for (int n = 0; n < kFftSize; ++n)
      fft.input()[n] = samples[offset + static_cast<std::size_t>(n)] *
                       window[static_cast<std::size_t>(n)];
    fft.execute();
    for (int k = 0; k < bins; ++k) mags(k, t) = fft.magnitude(k);
  }
  return mags;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }
double hz_to_erb_number(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }
double erb_number_to_hz(double erb) {
  return (std::pow(10.0, erb / 21.4) - 1.0) / 0.00437;
}

Eigen::MatrixXd triangular_filterbank(const std::vector<double>& centers_hz,
                                      const std::vector<double>& lower_hz,
                                      const std::vector<double>& upper_hz,
                                      double (*to_scale)(double),
                                      int sample_rate) {
  const int bins = kFftSize / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate) / kFftSize;
  const auto n_bands = static_cast<Eigen::Index>(centers_hz.size());
  Eigen::MatrixXd bank = Eigen::MatrixXd::Zero(n_bands, bins);
  for (Eigen::Index b = 0; b < n_bands; ++b) {
    const auto i = static_cast<std::size_t>(b);
    const double lo = to_scale(lower_hz[i]);
    const double mid = to_scale(centers_hz[i]);
    const double hi = to_scale(upper_hz[i]);
    for (int k = 0; k < bins; ++k) {
      const double s = to_scale(k * bin_hz);
      double w = 0.0;
      if (s > lo && s <= mid)
        w = (s - lo) / (mid - lo);
      else if (s > mid && s < hi)
        w = (hi - s) / (hi - mid);
      bank(b, k) = w;
    }
    // Interpolation floor for bands narrower than one bin.
    const double pos = centers_hz[i] / bin_hz;
    const int k0 = std::clamp(static_cast<int>(std::floor(pos)), 0, bins - 1);
    const int k1 = std::min(k0 + 1, bins - 1);
    const double frac = pos - k0;
    bank(b, k0) = std::max(bank(b, k0), 1.0 - frac);
    bank(b, k1) = std::max(bank(b, k1), k1 == k0 ? 1.0 : frac);
  }
  return bank;
}

Spectrogram mel_spectrogram(const AudioClip& clip, const MelOptions& opts) {
  if (clip.samples.size() < static_cast<std::size_t>(kFftSize))
    throw ArgumentError("mel_spectrogram: clip shorter than one FFT window");
  if (opts.n_bands < 1) throw ArgumentError("mel_spectrogram: n_bands < 1");
  if (clip.sample_rate != 22050)
    warn(fmt::format("mel_spectrogram: sample rate {} Hz (expected 22050)",
                     clip.sample_rate));
  const double top = hz_to_mel(clip.sample_rate / 2.0);
  const int n = opts.n_bands;
  std::vector<double> points(static_cast<std::size_t>(n + 2));
  for (int i = 0; i < n + 2; ++i)
    points[static_cast<std::size_t>(i)] = mel_to_hz(top * i / (n + 1));
  std::vector<double> lower(points.begin(), points.end() - 2);
  std::vector<double> centers(points.begin() + 1, points.end() - 1);
  std::vector<double> upper(points.begin() + 2, points.end());
  const Eigen::MatrixXd bank =
      triangular_filterbank(centers, lower, upper, &hz_to_mel, clip.sample_rate);
  return apply_bank(clip, bank, std::move(centers), FreqScale::kMel);
}

Spectrogram median_clip(const Spectrogram& spec) {
  Spectrogram out = spec;
  if (spec.n_frames() == 0) return out;
  std::vector<double> row(static_cast<std::size_t>(spec.n_frames()));
  for (Eigen::Index f = 0; f < spec.n_bands(); ++f) {
    for (Eigen::Index t = 0; t < spec.n_frames(); ++t)
      row[static_cast<std::size_t>(t)] = spec.mags(f, t);
    const double med = median_of(row);
    out.mags.row(f) = (spec.mags.row(f).array() - med).cwiseMax(0.0);
  }
  return out;
}

Spectrogram log_compress(const Spectrogram& spec) {
  Spectrogram out = spec;
  out.mags = spec.mags.array().log1p();
  return out;
}

Spectrogram erb_spectrogram(const AudioClip& clip, const ErbOptions& opts) {
  if (clip.sample_rate / 2.0 < opts.max_hz)
    throw ArgumentError(fmt::format(
        "erb_spectrogram: Nyquist {} Hz below top band {} Hz",
        clip.sample_rate / 2.0, opts.max_hz));
  if (clip.samples.size() < static_cast<std::size_t>(kFftSize))
    throw ArgumentError("erb_spectrogram: clip shorter than one FFT window");
  if (opts.n_bands < 2) throw ArgumentError("erb_spectrogram: n_bands < 2");
  const double e_lo = hz_to_erb_number(opts.min_hz);
  const double e_hi = hz_to_erb_number(opts.max_hz);
  const int n = opts.n_bands;
  const double spacing = (e_hi - e_lo) / (n - 1);
  std::vector<double> centers(static_cast<std::size_t>(n));
  std::vector<double> lower(centers.size());
  std::vector<double> upper(centers.size());
  for (int i = 0; i < n; ++i) {
    const double e = i == n - 1 ? e_hi : e_lo + spacing * i;
    const auto k = static_cast<std::size_t>(i);
    centers[k] = i == n - 1 ? opts.max_hz : erb_number_to_hz(e);
    if (i == 0) centers[k] = opts.min_hz;
    lower[k] = erb_number_to_hz(std::max(e - spacing, 0.0));
    upper[k] = erb_number_to_hz(e + spacing);
  }
  const Eigen::MatrixXd bank = triangular_filterbank(
      centers, lower, upper, &hz_to_erb_number, clip.sample_rate);
  return apply_bank(clip, bank, std::move(centers), FreqScale::kErb);
}

Spectrogram preemphasize(const Spectrogram& spec, const PreemphasisOptions& opts) {
  if (spec.scale != FreqScale::kErb)
    throw ArgumentError("preemphasize: expects an ERB spectrogram");
  Spectrogram out = spec;
  for (Eigen::Index f = 0; f < spec.n_bands(); ++f) {
    const double g = std::max(
        opts.floor, spec.band_centers[static_cast<std::size_t>(f)] / opts.reference_hz);
    out.mags.row(f) *= g;
  }
  return out;
}

void write_spectrogram_csv(const std::filesystem::path& path,
                           const Spectrogram& spec) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  for (Eigen::Index f = 0; f < spec.n_bands(); ++f) {
    std::string line = fmt::format("{:.3f}", spec.band_centers[static_cast<std::size_t>(f)]);
    for (Eigen::Index t = 0; t < spec.n_frames(); ++t)
      line += fmt::format(",{:.9g}", spec.mags(f, t));
    out << line << '\n';
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

void write_spectrogram_png(const std::filesystem::path& path,
                           const Spectrogram& spec) {
  const auto width = static_cast<png_uint_32>(std::max<Eigen::Index>(spec.n_frames(), 1));
  const auto height = static_cast<png_uint_32>(std::max<Eigen::Index>(spec.n_bands(), 1));
  const double peak = spec.mags.size() ? spec.mags.maxCoeff() : 0.0;

  std::vector<unsigned char> pixels(static_cast<std::size_t>(width) * height * 2, 0);
  for (Eigen::Index f = 0; f < spec.n_bands(); ++f) {
    const std::size_t row = height - 1 - static_cast<std::size_t>(f);
    for (Eigen::Index t = 0; t < spec.n_frames(); ++t) {
      double level = 0.0;
      if (peak > 0.0 && spec.mags(f, t) > 0.0)
        level = std::clamp(1.0 + 20.0 * std::log10(spec.mags(f, t) / peak) / 80.0,
                           0.0, 1.0);
      const auto v = static_cast<unsigned>(std::lround(level * 65535.0));
      unsigned char* px = &pixels[(row * width + static_cast<std::size_t>(t)) * 2];
      px[0] = static_cast<unsigned char>(v >> 8);
      px[1] = static_cast<unsigned char>(v & 0xff);
    }
  }

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"),
                                           &std::fclose);
  if (!fp) throw IoError(path.string() + ": cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": PNG encoding failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (png_uint_32 r = 0; r < height; ++r)
    png_write_row(png, &pixels[static_cast<std::size_t>(r) * width * 2]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace bioctx
