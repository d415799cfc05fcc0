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
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bioctx/frontend.hpp"
#include "bioctx/roll.hpp"

namespace bioctx {

// Spectral templates P(f|c,e). Exemplars of all classes are stored side by
// side; class c owns columns [offsets[c], offsets[c + 1]).
struct Dictionary {
  Eigen::MatrixXd templates;  // F x total exemplars, every column sums to 1
  std::vector<std::string> classes;
  std::vector<Eigen::Index> offsets;  // classes.size() + 1 entries

  Eigen::Index n_bands() const { return templates.rows(); }
  Eigen::Index n_classes() const { return static_cast<Eigen::Index>(classes.size()); }
  Eigen::Index n_exemplars(Eigen::Index c) const {
    return offsets[static_cast<std::size_t>(c + 1)] - offsets[static_cast<std::size_t>(c)];
  }
  Eigen::Index total_exemplars() const { return templates.cols(); }
};

struct DictionaryOptions {
  int exemplars = 40;
  int kmeans_iters = 100;
  // Per-class frame cap before clustering (deterministic subsample).
  Eigen::Index max_frames = 20000;
  std::uint64_t seed = 0;
};

// For each class: gather the frames where it is active (NA frames skipped),
// L1-normalise them, cluster into min(E, T_c) k-means centroids and
// renormalise each centroid to sum 1. A class without frames gets a single
// uniform template and a warning.
Dictionary build_dictionary(const std::vector<Spectrogram>& specs,
                            const std::vector<ActivationRoll>& rolls,
                            const DictionaryOptions& opts);

// EM state and output.
struct PlcaResult {
  Eigen::MatrixXd p_c_given_t;   // C x T
  Eigen::MatrixXd p_e_given_ct;  // total exemplars x T, blocks as in Dictionary
  Eigen::MatrixXd p_ct;          // C x T, P(t) P(c|t)
  Eigen::VectorXd p_t;           // T, column energy share of V
};

struct PlcaOptions {
  int iters = 30;
  std::uint64_t seed = 0;
};

// Called after every EM iteration (1-based) with the current state.
using PlcaObserver = std::function<void(int, const PlcaResult&)>;

// V / sum(V); throws ArgumentError on negative entries.
Eigen::MatrixXd normalize_spectrogram(const Eigen::MatrixXd& v);

// Random (0,1) initialisation, normalised over c and over e. P(t) is taken
// from the normalised spectrogram `vbar`.
PlcaResult plca_initialize(const Eigen::MatrixXd& vbar, const Dictionary& dict,
                           std::uint64_t seed);

// One E-step followed by both M-steps, in place. Denominators are floored at
// 1e-300; a frame (or class) with no mass gets a uniform distribution.
void plca_iterate(const Eigen::MatrixXd& vbar, const Dictionary& dict, PlcaResult& state);

PlcaResult plca_decompose(const Spectrogram& v, const Dictionary& dict,
                          const PlcaOptions& opts, const PlcaObserver& observer = {});

// Model distribution P(f,t) = P(t) sum_{c,e} P(f|c,e) P(c|t) P(e|c,t).
Eigen::MatrixXd plca_model(const Dictionary& dict, const PlcaResult& result);

// KL(V/sum V || P(f,t)); +infinity when the model has no mass where V does.
double kl_objective(const Spectrogram& v, const Dictionary& dict, const PlcaResult& result);

// Frame decisions: score >= threshold_c, then runs shorter than min_dur
// (run_length * step) are cleared. The output keeps the input's grid, classes
// and NA mask.
ActivationRoll binarize_events(const ActivationRoll& scores,
                               const std::vector<double>& thresholds, double min_dur);

// Zeroes every masked column.
Eigen::MatrixXd apply_na(const Eigen::MatrixXd& p_ct, const std::vector<std::uint8_t>& na_mask);

void save_dictionary(const std::filesystem::path& path, const Dictionary& dict);
Dictionary load_dictionary(const std::filesystem::path& path);

}  // namespace bioctx
