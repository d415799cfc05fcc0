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

#include "bioctx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bioctx/error.hpp"

namespace bioctx {
namespace {

void check_shapes(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
                  const std::vector<std::uint8_t>& mask) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols() ||
      static_cast<Eigen::Index>(mask.size()) != truth.cols())
    throw ArgumentError("metric inputs have mismatched shapes");
}

struct Counts {
  std::int64_t tp = 0, fp = 0, fn = 0;
};

Counts count_row(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
                 const std::vector<std::uint8_t>& mask, Eigen::Index c) {
  Counts k;
  for (Eigen::Index t = 0; t < truth.cols(); ++t) {
    if (mask[static_cast<std::size_t>(t)]) continue;
    const bool p = pred(c, t) > 0.5;
    const bool y = truth(c, t) > 0.5;
    k.tp += p && y;
    k.fp += p && !y;
    k.fn += !p && y;
  }
  return k;
}

}  // namespace

FScore f_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  FScore s;
  s.tp = tp;
  s.fp = fp;
  s.fn = fn;
  s.precision_defined = tp + fp > 0;
  s.recall_defined = tp + fn > 0;
  s.precision = s.precision_defined ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = s.recall_defined ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f = s.precision > 0.0 && s.recall > 0.0
            ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
            : 0.0;
  return s;
}

FScore micro_f(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
               const std::vector<std::uint8_t>& mask) {
  check_shapes(pred, truth, mask);
  Counts total;
  for (Eigen::Index c = 0; c < truth.rows(); ++c) {
    const Counts k = count_row(pred, truth, mask, c);
    total.tp += k.tp;
    total.fp += k.fp;
    total.fn += k.fn;
  }
  return f_from_counts(total.tp, total.fp, total.fn);
}

FScore micro_f(const ActivationRoll& pred, const ActivationRoll& truth) {
  std::vector<std::uint8_t> mask = truth.na_mask;
  if (pred.na_mask.size() == mask.size())
    for (std::size_t t = 0; t < mask.size(); ++t) mask[t] |= pred.na_mask[t];
  return micro_f(pred.values, truth.values, mask);
}

FScore class_f(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
               const std::vector<std::uint8_t>& mask, Eigen::Index c) {
  check_shapes(pred, truth, mask);
  const Counts k = count_row(pred, truth, mask, c);
  return f_from_counts(k.tp, k.fp, k.fn);
}

std::optional<double> auc(std::span<const double> scores, std::span<const double> truth,
                          std::span<const std::uint8_t> mask) {
  if (scores.size() != truth.size() || (!mask.empty() && mask.size() != truth.size()))
    throw ArgumentError("auc: mismatched lengths");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (mask.empty() || !mask[i]) idx.push_back(i);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (truth[idx[k]] > 0.5) {
        rank_sum += midrank;
        n_pos += 1.0;
      }
    i = j;
  }
  const double n_neg = static_cast<double>(idx.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

std::optional<double> class_auc(const ActivationRoll& scores, const ActivationRoll& truth,
                                Eigen::Index c) {
  if (scores.n_steps() != truth.n_steps()) throw ArgumentError("class_auc: length mismatch");
  const Eigen::VectorXd s = scores.values.row(c).transpose();
  const Eigen::VectorXd y = truth.values.row(c).transpose();
  std::vector<std::uint8_t> mask = truth.na_mask;
  if (scores.na_mask.size() == mask.size())
    for (std::size_t t = 0; t < mask.size(); ++t) mask[t] |= scores.na_mask[t];
  return auc({s.data(), static_cast<std::size_t>(s.size())},
             {y.data(), static_cast<std::size_t>(y.size())}, mask);
}

std::vector<double> quantile_candidates(std::vector<double> values, int count) {
  if (values.empty()) return {};
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  const std::size_t n = values.size();
  for (int i = 0; i < count; ++i) {
    const auto pos = static_cast<std::size_t>(
        std::floor(static_cast<double>(i) * static_cast<double>(n - 1) / (count - 1)));
    out.push_back(values[std::min(pos, n - 1)]);
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> choose_thresholds(const ActivationRoll& scores, const ActivationRoll& truth,
                                      ThresholdMode mode) {
  if (scores.n_classes() != truth.n_classes() || scores.n_steps() != truth.n_steps())
    throw ArgumentError("choose_thresholds: mismatched rolls");
  const Eigen::Index classes = truth.n_classes();
  std::vector<std::uint8_t> mask = truth.na_mask;
  for (std::size_t t = 0; t < mask.size() && t < scores.na_mask.size(); ++t)
    mask[t] |= scores.na_mask[t];

  constexpr double kNever = std::numeric_limits<double>::infinity();
  std::vector<double> thresholds(static_cast<std::size_t>(classes), kNever);
  std::vector<bool> has_pos(static_cast<std::size_t>(classes), false);
  for (Eigen::Index c = 0; c < classes; ++c)
    for (Eigen::Index t = 0; t < truth.n_steps(); ++t)
      if (!mask[static_cast<std::size_t>(t)] && truth.values(c, t) > 0.5)
        has_pos[static_cast<std::size_t>(c)] = true;

  auto class_values = [&](Eigen::Index c, std::vector<double>& out) {
    for (Eigen::Index t = 0; t < scores.n_steps(); ++t)
      if (!mask[static_cast<std::size_t>(t)]) out.push_back(scores.values(c, t));
  };
  auto counts_at = [&](Eigen::Index c, double thr) {
    Counts k;
    for (Eigen::Index t = 0; t < scores.n_steps(); ++t) {
      if (mask[static_cast<std::size_t>(t)]) continue;
      const bool p = scores.values(c, t) >= thr;
      const bool y = truth.values(c, t) > 0.5;
      k.tp += p && y;
      k.fp += p && !y;
      k.fn += !p && y;
    }
    return k;
  };

  if (mode == ThresholdMode::kPerClass) {
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (!has_pos[static_cast<std::size_t>(c)]) continue;
      std::vector<double> values;
      class_values(c, values);
      double best_f = -1.0;
      for (double thr : quantile_candidates(std::move(values))) {
        const Counts k = counts_at(c, thr);
        const double f = f_from_counts(k.tp, k.fp, k.fn).f;
        if (f > best_f) {
          best_f = f;
          thresholds[static_cast<std::size_t>(c)] = thr;
        }
      }
    }
    return thresholds;
  }

  std::vector<double> values;
  for (Eigen::Index c = 0; c < classes; ++c) class_values(c, values);
  double best_f = -1.0;
  double best_thr = kNever;
  for (double thr : quantile_candidates(std::move(values))) {
    Counts total;
    for (Eigen::Index c = 0; c < classes; ++c) {
      if (!has_pos[static_cast<std::size_t>(c)]) continue;
      const Counts k = counts_at(c, thr);
      total.tp += k.tp;
      total.fp += k.fp;
      total.fn += k.fn;
    }
    const double f = f_from_counts(total.tp, total.fp, total.fn).f;
    if (f > best_f) {
      best_f = f;
      best_thr = thr;
    }
  }
  for (Eigen::Index c = 0; c < classes; ++c)
    if (has_pos[static_cast<std::size_t>(c)]) thresholds[static_cast<std::size_t>(c)] = best_thr;
  return thresholds;
}

ActivationRoll apply_thresholds(const ActivationRoll& scores,
                                const std::vector<double>& thresholds) {
  if (static_cast<Eigen::Index>(thresholds.size()) != scores.n_classes())
    throw ArgumentError("apply_thresholds: one threshold per class required");
  ActivationRoll out = scores;
  for (Eigen::Index c = 0; c < scores.n_classes(); ++c)
    for (Eigen::Index t = 0; t < scores.n_steps(); ++t)
      out.values(c, t) = scores.values(c, t) >= thresholds[static_cast<std::size_t>(c)] ? 1.0 : 0.0;
  return out;
}

TimeBudget time_budget(const ActivationRoll& roll, double interval) {
  if (interval <= 0.0 || roll.step <= 0.0) throw ArgumentError("time_budget: bad interval");
  const double ratio = interval / roll.step;
  if (std::abs(ratio - std::round(ratio)) > 1e-6 || std::round(ratio) < 1.0)
    throw ArgumentError("time_budget: interval must be a multiple of the roll step");
  const auto per = static_cast<Eigen::Index>(std::round(ratio));
  const Eigen::Index groups = (roll.n_steps() + per - 1) / per;
  TimeBudget out;
  out.interval = interval;
  out.proportion = Eigen::MatrixXd::Zero(roll.n_classes(), groups);
  out.defined.assign(static_cast<std::size_t>(groups), false);
  std::vector<double> counts(static_cast<std::size_t>(groups), 0.0);
  for (Eigen::Index t = 0; t < roll.n_steps(); ++t) {
    if (roll.masked(t)) continue;
    const Eigen::Index g = t / per;
    out.proportion.col(g) += roll.values.col(t);
    counts[static_cast<std::size_t>(g)] += 1.0;
  }
  for (Eigen::Index g = 0; g < groups; ++g) {
    const double n = counts[static_cast<std::size_t>(g)];
    if (n > 0.0) {
      out.proportion.col(g) /= n;
      out.defined[static_cast<std::size_t>(g)] = true;
    } else {
      out.proportion.col(g).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

}  // namespace bioctx
