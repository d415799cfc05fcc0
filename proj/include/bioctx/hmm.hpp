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

#include <Eigen/Dense>

#include "bioctx/gmm.hpp"
#include "bioctx/roll.hpp"

namespace bioctx {

enum class HmmKind { kJoint, kPerClass };
enum class DecodeMode { kViterbi, kFilter };

// One HMM. A state is a bit set over the smoother's classes (joint model) or
// a single off/on bit (per-class model).
struct Hmm {
  std::vector<std::uint64_t> states;
  Eigen::MatrixXd trans;    // S x S, row-stochastic, strictly positive
  Eigen::VectorXd initial;  // S
  std::vector<Gmm> emissions;
  int obs_dim = 0;

  Eigen::Index n_states() const { return static_cast<Eigen::Index>(states.size()); }
  // S x T log emission densities for observations stored obs_dim x T.
  Eigen::MatrixXd log_emissions(const Eigen::MatrixXd& obs) const;
};

// Either one joint model over all classes, or one two-state model per class
// (model c observes row c of the score roll).
struct HmmSmoother {
  HmmKind kind = HmmKind::kJoint;
  std::vector<std::string> classes;
  std::vector<Hmm> models;
};

struct HmmTrainOptions {
  int max_components = 8;  // UBM size chosen by BIC over 1..max
  int ubm_iters = 50;
  int state_iters = 20;
  double var_floor = 1e-6;
  std::uint64_t seed = 0;
};

// Supervised training from aligned score rolls and binary truth rolls. Steps
// masked in either roll split the sequences. Transitions and the initial
// distribution use add-one smoothing.
HmmSmoother train_hmm(const std::vector<ActivationRoll>& observations,
                      const std::vector<ActivationRoll>& truth, HmmKind kind,
                      const HmmTrainOptions& opts);

// Maximum-probability path in log space; ties go to the lower state index.
std::vector<int> viterbi_path(const Eigen::MatrixXd& trans, const Eigen::VectorXd& initial,
                              const Eigen::MatrixXd& log_emissions);

// log P(path, observations).
double path_log_probability(const Eigen::MatrixXd& trans, const Eigen::VectorXd& initial,
                            const Eigen::MatrixXd& log_emissions, const std::vector<int>& path);

// Filtered posteriors P(s_t | o_1..t), S x T, each column summing to 1. A
// step where every state has zero likelihood yields a uniform column.
Eigen::MatrixXd forward_filter(const Eigen::MatrixXd& trans, const Eigen::VectorXd& initial,
                               const Eigen::MatrixXd& log_emissions);

std::vector<int> viterbi(const Hmm& model, const Eigen::MatrixXd& obs);
Eigen::MatrixXd forward_filter(const Hmm& model, const Eigen::MatrixXd& obs);

// Applies the smoother to a score roll. Viterbi yields a binary roll from the
// decoded states' class bits; filtering yields per-class marginals in [0,1].
// Masked steps are zero and split the sequence.
ActivationRoll smooth(const ActivationRoll& scores, const HmmSmoother& smoother,
                      DecodeMode mode);

void save_hmm(const std::filesystem::path& path, const HmmSmoother& smoother);
HmmSmoother load_hmm(const std::filesystem::path& path);

}  // namespace bioctx
