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
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bioctx/roll.hpp"

namespace bioctx {

struct FScore {
  double f = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool precision_defined = false;  // false when nothing was predicted
  bool recall_defined = false;     // false when nothing was true
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

FScore f_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn);

// Counts pooled over every class and every unmasked step.
FScore micro_f(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
               const std::vector<std::uint8_t>& mask);
FScore micro_f(const ActivationRoll& pred, const ActivationRoll& truth);

// Single class (row c).
FScore class_f(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
               const std::vector<std::uint8_t>& mask, Eigen::Index c);

// Mann-Whitney AUC with midranks for ties; empty when the unmasked steps lack
// either a positive or a negative.
std::optional<double> auc(std::span<const double> scores, std::span<const double> truth,
                          std::span<const std::uint8_t> mask);
std::optional<double> class_auc(const ActivationRoll& scores, const ActivationRoll& truth,
                                Eigen::Index c);

enum class ThresholdMode { kPerClass, kSingle };

inline constexpr int kThresholdQuantiles = 50;

// Candidate thresholds: the lower 50-quantiles (nearest rank) of the values,
// ascending and deduplicated.
std::vector<double> quantile_candidates(std::vector<double> values,
                                        int count = kThresholdQuantiles);

// Per class: the candidate maximising that class's F. Single: one shared
// candidate (from all scores) maximising micro-F. Ties go to the lower
// threshold. Classes with no positives get +infinity.
std::vector<double> choose_thresholds(const ActivationRoll& scores, const ActivationRoll& truth,
                                      ThresholdMode mode);

// values >= threshold_c -> 1. NA mask is kept.
ActivationRoll apply_thresholds(const ActivationRoll& scores, const std::vector<double>& thresholds);

struct TimeBudget {
  double interval = 0.0;
  Eigen::MatrixXd proportion;  // classes x intervals; NaN where undefined
  std::vector<bool> defined;   // false when an interval has no unmasked step
};

// Per class and interval: summed values over unmasked steps divided by the
// number of unmasked steps. `interval` must be a multiple of the roll step.
TimeBudget time_budget(const ActivationRoll& roll, double interval);

}  // namespace bioctx
