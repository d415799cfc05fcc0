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
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bioctx/annotation.hpp"

namespace bioctx {

// classes x steps activity matrix on a uniform time grid. Step t covers
// [t*step, (t+1)*step). Holds ground truth (binary), detector scores
// (real, >= 0) and the missing-data mask.
struct ActivationRoll {
  std::vector<std::string> classes;
  double step = 0.0;
  Eigen::MatrixXd values;            // classes.size() x n_steps
  std::vector<std::uint8_t> na_mask; // n_steps, 1 = missing data

  ActivationRoll() = default;
  ActivationRoll(std::vector<std::string> names, double step_s,
                 Eigen::Index n_steps);

  Eigen::Index n_classes() const { return values.rows(); }
  Eigen::Index n_steps() const { return values.cols(); }
  bool masked(Eigen::Index t) const { return na_mask[static_cast<std::size_t>(t)] != 0; }
};

// When a step counts as missing data.
enum class NaPolicy {
  kAny,       // NA covers any positive part of the step
  kMajority,  // NA covers at least half of the step
};

// Max-pooling rasterization: values(c, t) = 1 iff an event of class c
// overlaps step t by a positive duration. Events whose label is neither a
// listed class nor `na_label` are ignored.
ActivationRoll rasterize(const AnnotationTrack& track,
                         const std::vector<std::string>& classes, double step,
                         Eigen::Index n_steps,
                         NaPolicy na_policy = NaPolicy::kAny,
                         const std::string& na_label = "NA");

// Number of steps needed to cover `duration` (a trailing partial step counts).
Eigen::Index steps_covering(double duration, double step);

enum class PoolMode { kMax, kMean };

// Groups consecutive steps into target_step-long groups. Step t lands in
// group floor(t*step/target_step), so integer ratios give exact
// ratio-sized groups and other ratios give groups whose sizes differ by at
// most one. The NA mask pools with max.
ActivationRoll pool_roll(const ActivationRoll& roll, double target_step,
                         PoolMode mode);

// Index of the group holding step t (see pool_roll).
Eigen::Index pool_group(Eigen::Index t, double step, double target_step);

// Pads with zero columns (unmasked) or truncates to exactly n_steps.
ActivationRoll fit_steps(ActivationRoll roll, Eigen::Index n_steps);

// Concatenates rolls with identical class lists and steps along time.
ActivationRoll concat_rolls(const std::vector<ActivationRoll>& rolls);

// Converts a binary roll into events (one per maximal run per class).
AnnotationTrack roll_to_track(const ActivationRoll& roll);

}  // namespace bioctx
