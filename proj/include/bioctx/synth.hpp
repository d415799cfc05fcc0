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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bioctx/annotation.hpp"
#include "bioctx/audio.hpp"
#include "bioctx/scheme.hpp"

namespace bioctx {

// Synthetic event families. Each renders with a characteristic band used by
// the level checks.
enum class Family {
  kFocalCall,
  kNonFocalCall,
  kFlying,
  kWalking,
  kShaking,
  kLooking,
  kTraffic,
  kColony,
};

inline constexpr int kFamilyCount = 8;

struct FamilyInfo {
  Family family;
  const char* category;      // analysis category the raw labels map to
  double band_lo;            // Hz
  double band_hi;            // Hz
};

const std::vector<FamilyInfo>& family_table();

// Category map covering exactly the raw labels the generator writes, with
// categories in family order.
CategoryMap synth_category_map();

// Per-individual voice: multiplicative pitch and gain offsets plus rhythm
// rates. Field recordings shift these further.
struct Timbre {
  double pitch = 1.0;
  double call_pitch = 1.0;
  double gain[kFamilyCount] = {1, 1, 1, 1, 1, 1, 1, 1};
  double flap_rate = 15.0;   // Hz, wing-beat modulation
  double step_rate = 3.0;    // Hz, walking clicks
  double click_hp = 2500.0;  // Hz
};

Timbre individual_timbre(std::uint64_t corpus_seed, int individual_index,
                         Condition condition);

struct SceneConfig {
  double duration = 300.0;
  int sample_rate = 22050;
  double max_activity = 0.16;  // hard cap on each category's active fraction
  double na_per_minute = 0.0;  // expected "Missing video" spans per minute
  double bed_rms = 0.004;      // continuous unlabelled noise bed
  Timbre timbre;
  std::uint64_t seed = 0;
};

struct Scene {
  AudioClip clip;
  AnnotationTrack track;  // raw labels
  std::vector<double> bed;  // the noise bed alone, same length as clip
};

Scene generate_scene(const SceneConfig& config);

struct CorpusConfig {
  int individuals = 4;            // captive
  int per_individual = 4;
  int field_individuals = 0;
  int field_per_individual = 2;
  double duration = 300.0;
  double na_per_minute = 0.0;
  double max_activity = 0.16;
  std::uint64_t seed = 7;
  int jobs = 1;
};

// Writes <out>/<id>_<k>.wav and .txt label tracks, manifest.csv and
// categories.toml. Creates the directory if needed. Returns the manifest.
Manifest generate_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir);

// Fraction of [0, duration) covered by the union of the given events.
double activity_fraction(const std::vector<AnnotationEvent>& events, double duration);

}  // namespace bioctx
