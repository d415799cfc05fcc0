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

#include <doctest.h>

#include <complex>
#include <fstream>
#include <algorithm>
#include <random>

#include "bioctx/error.hpp"
#include "bioctx/frontend.hpp"
#include "support.hpp"

using namespace bioctx;

namespace {

Spectrogram from_rows(const std::vector<std::vector<double>>& rows) {
  Spectrogram s;
  s.mags.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t f = 0; f < rows.size(); ++f)
    for (std::size_t t = 0; t < rows[f].size(); ++t)
      s.mags(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(t)) = rows[f][t];
  s.hop = 1.0;
  for (std::size_t f = 0; f < rows.size(); ++f) s.band_centers.push_back(100.0 * (f + 1));
  return s;
}

}  // namespace

TEST_CASE("STFT framing and magnitude against a direct DFT") {
  CHECK(stft_frame_count(22050) == 42);
  CHECK(stft_frame_count(1024) == 1);
  CHECK(stft_frame_count(1023) == 0);
  CHECK(stft_frame_count(1024 + 511) == 1);
  CHECK(stft_frame_count(1024 + 512) == 2);

  const AudioClip c = testing::white(0.2, 5);
  const Eigen::MatrixXd m = stft_magnitude(c.samples);
  REQUIRE(m.rows() == 513);
  for (Eigen::Index t : {Eigen::Index(0), m.cols() - 1}) {
    for (int k : {0, 1, 17, 256, 512}) {
      std::complex<double> acc = 0.0;
      for (int n = 0; n < 1024; ++n) {
        const double w = 0.5 * (1.0 - std::cos(2.0 * M_PI * n / 1024.0));
        acc += c.samples[static_cast<std::size_t>(t * 512 + n)] * w *
               std::polar(1.0, -2.0 * M_PI * k * n / 1024.0);
      }
      CHECK(m(k, t) == doctest::Approx(std::abs(acc)).epsilon(1e-10));
    }
  }
}

TEST_CASE("mel_spectrogram") {
  const AudioClip one = testing::sine(1000.0, 1.0);
  const Spectrogram s = mel_spectrogram(one);
  CHECK(s.n_frames() == 42);
  CHECK(s.n_bands() == 40);
  CHECK(s.hop == doctest::Approx(512.0 / 22050.0));
  CHECK(s.scale == FreqScale::kMel);

  // Band centers: 40 interior points of 42 equispaced mel values.
  const double top = 2595.0 * std::log10(1.0 + 11025.0 / 700.0);
  std::vector<double> oracle;
  for (int i = 1; i <= 40; ++i) oracle.push_back(700.0 * (std::pow(10.0, top * i / 41.0 / 2595.0) - 1.0));
  for (int i = 0; i < 40; ++i) CHECK(s.band_centers[i] == doctest::Approx(oracle[i]).epsilon(1e-12));

  Eigen::Index best = 0;
  s.mags.col(20).maxCoeff(&best);
  std::size_t nearest = 0;
  for (std::size_t i = 0; i < oracle.size(); ++i)
    if (std::abs(hz_to_mel(oracle[i]) - hz_to_mel(1000.0)) <
        std::abs(hz_to_mel(oracle[nearest]) - hz_to_mel(1000.0)))
      nearest = i;
  CHECK(static_cast<std::size_t>(best) == nearest);

  AudioClip zero;
  zero.samples.assign(22050, 0.0);
  CHECK(mel_spectrogram(zero).mags.maxCoeff() == 0.0);

  AudioClip short_clip;
  short_clip.samples.assign(1000, 0.1);
  CHECK_THROWS_AS(mel_spectrogram(short_clip), ArgumentError);
}

TEST_CASE("filterbank: no empty band at 250 ERB bands") {
  const Spectrogram e = erb_spectrogram(testing::white(0.1, 1));
  const AudioClip c = testing::white(0.5, 3);
  const Spectrogram s = erb_spectrogram(c);
  for (Eigen::Index f = 0; f < s.n_bands(); ++f) CHECK(s.mags.row(f).sum() > 0.0);
  CHECK(e.mags.minCoeff() >= 0.0);
}

TEST_CASE("median_clip") {
  Spectrogram s = from_rows({{3, 3, 3, 3}, {0, 0, 0, 0, }, {1, 2, 3, 0}});
  s.mags.row(1) << 0, 0, 0, 10;
  Spectrogram out = median_clip(s);
  CHECK(out.mags.row(0).sum() == 0.0);
  CHECK(out.mags(1, 3) == 10.0);
  CHECK(out.mags(1, 0) == 0.0);
  // [1,2,3,0] has median 1.5.
  CHECK(out.mags(2, 1) == doctest::Approx(0.5));
  CHECK(out.mags(2, 2) == doctest::Approx(1.5));

  const Spectrogram odd = median_clip(from_rows({{1, 2, 3}}));
  CHECK(odd.mags(0, 0) == 0.0);
  CHECK(odd.mags(0, 1) == 0.0);
  CHECK(odd.mags(0, 2) == 1.0);

  // Idempotent once every band has median 0.
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Spectrogram r;
    r.mags = Eigen::MatrixXd::NullaryExpr(8, 1 + trial, [&] { return u(g); });
    r.band_centers.resize(8);
    const Spectrogram once = median_clip(r);
    CHECK(once.mags.minCoeff() >= 0.0);
    bool zero_medians = true;
    for (Eigen::Index f = 0; f < 8; ++f) {
      std::vector<double> v(once.mags.row(f).begin(), once.mags.row(f).end());
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
      zero_medians = zero_medians && med == 0.0;
    }
    if (r.n_frames() % 2 == 1) CHECK(zero_medians);
    if (zero_medians) CHECK(median_clip(once).mags == once.mags);
  }
}

TEST_CASE("erb_spectrogram geometry") {
  const Spectrogram s = erb_spectrogram(testing::white(1.0, 2));
  CHECK(s.n_bands() == 250);
  CHECK(s.hop == doctest::Approx(0.02322).epsilon(1e-3));
  CHECK(s.band_centers.front() == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(s.band_centers.back() == doctest::Approx(10800.0).epsilon(1e-12));
  const auto erbn = [](double f) { return 21.4 * std::log10(1.0 + 0.00437 * f); };
  const double spacing = (erbn(10800.0) - erbn(5.0)) / 249.0;
  for (std::size_t i = 1; i < 250; ++i) {
    CHECK(s.band_centers[i] > s.band_centers[i - 1]);
    CHECK(erbn(s.band_centers[i]) - erbn(s.band_centers[i - 1]) == doctest::Approx(spacing).epsilon(1e-9));
  }

  AudioClip zero;
  zero.samples.assign(22050, 0.0);
  CHECK(erb_spectrogram(zero).mags.maxCoeff() == 0.0);

  AudioClip low = testing::sine(440.0, 1.0, 0.5, 16000);
  CHECK_THROWS_AS(erb_spectrogram(low), ArgumentError);
}

TEST_CASE("erb energy scales quadratically with amplitude") {
  AudioClip a = testing::white(1.0, 9);
  AudioClip b = a;
  for (double& x : b.samples) x *= 3.0;
  const double ea = erb_spectrogram(a).mags.squaredNorm();
  const double eb = erb_spectrogram(b).mags.squaredNorm();
  CHECK(eb / ea == doctest::Approx(9.0).epsilon(1e-12));
}

TEST_CASE("preemphasize") {
  const Spectrogram s = erb_spectrogram(testing::white(0.5, 7));
  const Spectrogram p = preemphasize(s);
  const Eigen::Index top = s.n_bands() - 1;
  CHECK(p.mags.row(top) == s.mags.row(top));
  CHECK(p.mags.row(0).isApprox(0.05 * s.mags.row(0), 1e-15));
  double prev = 0.0;
  for (Eigen::Index f = 0; f < s.n_bands(); ++f) {
    const double g = p.mags(f, 0) / s.mags(f, 0);
    CHECK(g >= prev - 1e-15);
    CHECK(g == doctest::Approx(std::max(0.05, s.band_centers[static_cast<std::size_t>(f)] / 10800.0)));
    prev = g;
  }
  CHECK_THROWS_AS(preemphasize(mel_spectrogram(testing::white(0.5, 7))), ArgumentError);
}

TEST_CASE("log_compress and dumps") {
  const Spectrogram s = from_rows({{0.0, 1.0}, {2.0, 3.0}});
  const Spectrogram l = log_compress(s);
  CHECK(l.mags(0, 0) == 0.0);
  CHECK(l.mags(1, 1) == doctest::Approx(std::log(4.0)));

  testing::TempDir dir("dump");
  write_spectrogram_csv(dir / "s.csv", s);
  std::ifstream csv(dir / "s.csv");
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 2);
  write_spectrogram_png(dir / "s.png", s);
  std::ifstream png(dir / "s.png", std::ios::binary);
  char sig[8];
  png.read(sig, 8);
  CHECK(std::string(sig + 1, 3) == "PNG");
}
