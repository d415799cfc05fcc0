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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bioctx/annotation.hpp"
#include "bioctx/audio.hpp"
#include "bioctx/config.hpp"
#include "bioctx/featlearn.hpp"
#include "bioctx/forest.hpp"
#include "bioctx/hmm.hpp"
#include "bioctx/plca.hpp"
#include "bioctx/scheme.hpp"

namespace bioctx {

// Manifest plus category-mapped label tracks.
struct LabeledCorpus {
  Manifest manifest;
  CategoryMap categories;
  std::vector<std::string> classes;
  std::vector<AnnotationTrack> tracks;  // category labels, NA kept
};

// categories key, else categories.toml beside the manifest, else the
// built-in map.
CategoryMap resolve_category_map(const RunConfig& run);
LabeledCorpus load_corpus(const RunConfig& run);

// Signal representations one system needs for one recording.
struct Prepared {
  std::string name;                     // file stem; seeds per-recording randomness
  double duration = 0.0;
  Eigen::Index n_segments = 0;
  std::vector<Spectrogram> segment_mels; // classifier: log Mel per segment clip
  Spectrogram erb;                      // plca: pre-emphasised ERB spectrogram
};

Prepared prepare(const RunConfig& run, const AudioClip& clip, std::string name);

// Truth and missing-data masks for a prepared recording.
struct Targets {
  ActivationRoll segments;            // binary, segment grid, NA mask
  ActivationRoll frames;              // plca only: binary at the STFT hop
  std::vector<std::uint8_t> frame_na; // plca only: NA touches the frame window
};

Targets make_targets(const RunConfig& run, const std::vector<std::string>& classes,
                     const Prepared& p, const AnnotationTrack* track);

struct TrainedSystem {
  Config config;
  RunConfig run;
  std::vector<std::string> classes;
  CategoryMap categories;  // maps raw labels given at inference time
  std::uint64_t seed = 0;  // fold seed
  FeatureBasis basis;
  ForestModel forest;
  Dictionary dictionary;
  std::optional<HmmSmoother> hmm;
  std::vector<double> thresholds;  // empty for Viterbi output
};

TrainedSystem train_system(const Config& config, const std::vector<std::string>& classes,
                           const std::vector<const Prepared*>& recordings,
                           const std::vector<const Targets*>& targets);

void save_system(const std::filesystem::path& dir, const TrainedSystem& system);
TrainedSystem load_system(const std::filesystem::path& dir);

struct Prediction {
  ActivationRoll scores;     // segment grid, real valued, NA mask from labels
  ActivationRoll decisions;  // segment grid, binary
  AnnotationTrack events;    // decisions as events (frame resolution for highres)
};

// `targets` may be null when no labels exist; NA handling is then skipped.
Prediction predict(const TrainedSystem& system, const Prepared& p, const Targets* targets);

// Frame-level P(c,t) of a PLCA system at the STFT hop; masked frames are
// left out of the decomposition and read zero.
ActivationRoll plca_activations(const TrainedSystem& system, const Prepared& p,
                                const std::vector<std::uint8_t>& frame_na);

// `segment_index,class,score` rows plus an event label track.
void write_prediction(const std::filesystem::path& csv, const std::filesystem::path& events,
                      const Prediction& prediction);
Prediction read_prediction(const std::filesystem::path& csv, const std::filesystem::path& events,
                           const std::vector<std::string>& classes, double segment,
                           Eigen::Index n_segments);

// Metrics of pooled test predictions for one fold.
nlohmann::json evaluate_fold(const RunConfig& run, const std::vector<std::string>& classes,
                             const std::vector<Prediction>& predictions,
                             const std::vector<const Targets*>& truth,
                             const std::vector<double>* thresholds);

// Seed for one training run: depends only on the run seed and the set of
// training recording names, so identical folds train identically.
std::uint64_t training_seed(std::uint64_t seed, std::vector<std::string> names);

// Full crossvalidation under config's scheme; returns the report.
nlohmann::json run_xval(const Config& config);

// Trains on one fold's training files (fold < 0: every manifest entry).
TrainedSystem train_fold(const Config& config, int fold);

// Scores prediction files in `pred_dir` (<stem>.csv, <stem>.events.txt)
// against the manifest labels, for one fold's test files or (fold < 0)
// every entry.
nlohmann::json run_eval(const Config& config, const std::filesystem::path& pred_dir, int fold);

}  // namespace bioctx
