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

#include <fftw3.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "bioctx/annotation.hpp"
#include "bioctx/error.hpp"
#include "bioctx/roll.hpp"
#include "bioctx/scheme.hpp"
#include "bioctx/synth.hpp"
#include "support.hpp"

using namespace bioctx;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Energy of x[begin, end) between lo and hi Hz, from a plain FFTW transform.
double band_energy(const std::vector<double>& x, std::size_t begin, std::size_t end, double lo,
                   double hi, int rate) {
  const int n = static_cast<int>(end - begin);
  std::vector<double> in(x.begin() + static_cast<std::ptrdiff_t>(begin),
                         x.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<fftw_complex> out(static_cast<std::size_t>(n / 2 + 1));
  fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  double e = 0.0;
  for (int k = 0; k <= n / 2; ++k) {
    const double f = static_cast<double>(k) * rate / n;
    if (f >= lo && f <= hi) e += out[k][0] * out[k][0] + out[k][1] * out[k][1];
  }
  return e;
}

SceneConfig scene_config(std::uint64_t seed, int individual, Condition cond) {
  SceneConfig c;
  c.seed = seed;
  c.timbre = individual_timbre(99, individual, cond);
  c.na_per_minute = 0.3;
  return c;
}

}  // namespace

TEST_CASE("same seed gives identical scenes and files") {
  const Scene a = generate_scene(scene_config(5, 0, Condition::kCaptive));
  const Scene b = generate_scene(scene_config(5, 0, Condition::kCaptive));
  CHECK(a.clip.samples == b.clip.samples);
  CHECK(a.track.events == b.track.events);
  const Scene c = generate_scene(scene_config(6, 0, Condition::kCaptive));
  CHECK(a.clip.samples != c.clip.samples);

  testing::TempDir d1("synth1"), d2("synth2");
  CorpusConfig cfg;
  cfg.individuals = 2;
  cfg.per_individual = 2;
  cfg.duration = 30.0;
  cfg.seed = 3;
  cfg.jobs = 1;
  generate_corpus(cfg, d1.path());
  cfg.jobs = 3;
  generate_corpus(cfg, d2.path());
  for (const auto& entry : std::filesystem::directory_iterator(d1.path())) {
    const auto name = entry.path().filename().string();
    CHECK_MESSAGE(slurp(entry.path()) == slurp(d2 / name), name);
  }
}

TEST_CASE("per-category activity stays under the cap") {
  const CategoryMap map = synth_category_map();
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Scene s = generate_scene(scene_config(seed, static_cast<int>(seed), Condition::kCaptive));
    const AnnotationTrack mapped = map_labels(s.track, map);
    for (const auto& cat : map.categories) {
      std::vector<AnnotationEvent> events;
      for (const auto& e : mapped.events)
        if (e.label == cat) events.push_back(e);
      const double frac = activity_fraction(events, s.track.duration);
      CHECK_MESSAGE(frac < 0.16, cat << " " << frac);
      CHECK_MESSAGE(frac > 0.0, cat);
    }
  }
}

TEST_CASE("activity fraction counts the union") {
  const std::vector<AnnotationEvent> ev{{0, 2, "a"}, {1, 3, "a"}, {5, 6, "a"}};
  CHECK(activity_fraction(ev, 10.0) == doctest::Approx(0.4));
  CHECK(activity_fraction({}, 10.0) == 0.0);
}

TEST_CASE("events stand at least 6 dB above the bed in their band") {
  const CategoryMap map = synth_category_map();
  std::map<std::string, FamilyInfo> by_category;
  for (const auto& f : family_table()) by_category.emplace(f.category, f);

  int checked = 0;
  double worst = 1e9;
  for (int k = 0; k < 4; ++k) {
    const Condition cond = k % 2 ? Condition::kField : Condition::kCaptive;
    SceneConfig cfg = scene_config(40 + k, k, cond);
    const Scene s = generate_scene(cfg);
    const int rate = s.clip.sample_rate;
    for (const auto& e : s.track.events) {
      const std::string* cat = map.find(e.label);
      REQUIRE(cat != nullptr);
      if (*cat == map.na_label) continue;
      const FamilyInfo& fam = by_category.at(*cat);
      const auto b = static_cast<std::size_t>(e.start * rate);
      const auto en = std::min(s.clip.samples.size(), static_cast<std::size_t>(e.end * rate));
      const double sig = band_energy(s.clip.samples, b, en, fam.band_lo, fam.band_hi, rate);
      const double bed = band_energy(s.bed, b, en, fam.band_lo, fam.band_hi, rate);
      const double db = 10.0 * std::log10(sig / bed);
      worst = std::min(worst, db);
      CHECK_MESSAGE(db >= 6.0, e.label << " at " << e.start << ": " << db << " dB");
      ++checked;
    }
  }
  MESSAGE("events checked: " << checked << ", smallest margin " << worst << " dB");
  CHECK(checked > 100);
}

TEST_CASE("scenes are polyphonic and use every family") {
  const CategoryMap map = synth_category_map();
  const Scene s = generate_scene(scene_config(11, 2, Condition::kCaptive));
  const AnnotationTrack mapped = map_labels(s.track, map);
  const ActivationRoll r = rasterize(mapped, map.categories, 0.1,
                                     steps_covering(s.track.duration, 0.1));
  const double most = r.values.colwise().sum().maxCoeff();
  CHECK(most >= 2.0);
  std::set<std::string> labels;
  for (const auto& e : mapped.events) labels.insert(e.label);
  for (const auto& cat : map.categories) CHECK_MESSAGE(labels.count(cat) == 1, cat);
  CHECK(labels.count(map.na_label) == 1);
}

TEST_CASE("field timbre is shifted") {
  for (int i = 0; i < 5; ++i) {
    const Timbre cap = individual_timbre(7, i, Condition::kCaptive);
    const Timbre fld = individual_timbre(7, i, Condition::kField);
    CHECK(fld.pitch < cap.pitch);
    CHECK(fld.click_hp < cap.click_hp);
    CHECK(fld.gain[0] < cap.gain[0]);
  }
  // different individuals differ
  CHECK(individual_timbre(7, 0, Condition::kCaptive).pitch !=
        individual_timbre(7, 1, Condition::kCaptive).pitch);
}

TEST_CASE("corpus layout and schemes") {
  testing::TempDir dir("corpus");
  CorpusConfig cfg;
  cfg.individuals = 7;
  cfg.per_individual = 4;
  cfg.field_individuals = 2;
  cfg.field_per_individual = 2;
  cfg.duration = 2.0;
  cfg.seed = 1;
  const Manifest m = generate_corpus(cfg, dir.path());
  CHECK(m.entries.size() == 32);
  const Manifest back = read_manifest(dir / "manifest.csv");
  REQUIRE(back.entries.size() == 32);
  int captive = 0;
  for (const auto& e : back.entries) {
    CHECK(std::filesystem::exists(e.audio));
    CHECK(std::filesystem::exists(e.labels));
    captive += e.condition == Condition::kCaptive;
  }
  CHECK(captive == 28);
  CHECK(make_scheme(back, "EachSynth").folds.size() == 18);
  CHECK(make_scheme(back, "EachCap").folds.size() == 14);
  CHECK(make_scheme(back, "Cap-Field").folds.size() == 1);

  const CategoryMap cats = load_category_map(dir / "categories.toml");
  CHECK(cats.categories == synth_category_map().categories);

  const WavInfo info = read_wav_info(back.entries[0].audio);
  CHECK(info.sample_rate == 22050);
  CHECK(info.frames == 44100);

  CorpusConfig none = cfg;
  none.individuals = 0;
  none.field_individuals = 0;
  CHECK_THROWS_AS(generate_corpus(none, dir / "x"), ConfigError);
}
