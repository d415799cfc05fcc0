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

#include "bioctx/roll.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "bioctx/error.hpp"

namespace bioctx {
namespace {
constexpr double kOverlapEps = 1e-9;
constexpr double kGridEps = 1e-9;
}  // namespace

ActivationRoll::ActivationRoll(std::vector<std::string> names, double step_s,
                               Eigen::Index n_steps)
    : classes(std::move(names)),
      step(step_s),
      values(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes.size()),
                                   n_steps)),
      na_mask(static_cast<std::size_t>(n_steps), 0) {}

Eigen::Index steps_covering(double duration, double step) {
  if (step <= 0.0) throw ArgumentError("step must be positive");
  if (duration <= 0.0) return 0;
  return static_cast<Eigen::Index>(std::ceil(duration / step - kGridEps));
}

ActivationRoll rasterize(const AnnotationTrack& track,
                         const std::vector<std::string>& classes, double step,
                         Eigen::Index n_steps, NaPolicy na_policy,
                         const std::string& na_label) {
  if (classes.empty()) throw ConfigError("rasterize: empty class list");
  if (step <= 0.0) throw ArgumentError("rasterize: step must be positive");
  if (n_steps < 0) throw ArgumentError("rasterize: negative step count");

  ActivationRoll roll(classes, step, n_steps);
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t c = 0; c < classes.size(); ++c)
    index.emplace(classes[c], static_cast<Eigen::Index>(c));
  std::vector<double> na_cover(static_cast<std::size_t>(n_steps), 0.0);

  for (const auto& ev : track.events) {
    const bool is_na = ev.label == na_label;
    auto it = index.find(ev.label);
    if (!is_na && it == index.end()) continue;
    auto first = static_cast<Eigen::Index>(std::floor(ev.start / step));
    auto last = static_cast<Eigen::Index>(std::ceil(ev.end / step));
    first = std::max<Eigen::Index>(first - 1, 0);
    last = std::min<Eigen::Index>(last + 1, n_steps);
    for (Eigen::Index t = first; t < last; ++t) {
      const double lo = static_cast<double>(t) * step;
      const double hi = lo + step;
      const double overlap = std::min(ev.end, hi) - std::max(ev.start, lo);
      if (overlap <= kOverlapEps) continue;
      if (is_na)
        na_cover[static_cast<std::size_t>(t)] += overlap;
      else
        roll.values(it->second, t) = 1.0;
    }
  }
  for (Eigen::Index t = 0; t < n_steps; ++t) {
    const double cover = na_cover[static_cast<std::size_t>(t)];
    const bool na = na_policy == NaPolicy::kAny ? cover > 0.0
                                                : cover >= 0.5 * step - kOverlapEps;
    roll.na_mask[static_cast<std::size_t>(t)] = na ? 1 : 0;
  }
  return roll;
}

Eigen::Index pool_group(Eigen::Index t, double step, double target_step) {
  return static_cast<Eigen::Index>(
      std::floor(static_cast<double>(t) * step / target_step + kGridEps));
}

ActivationRoll pool_roll(const ActivationRoll& roll, double target_step,
                         PoolMode mode) {
  if (target_step < roll.step * (1.0 - kGridEps))
    throw ArgumentError("pool_roll: target step shorter than roll step");
  const Eigen::Index n = roll.n_steps();
  const Eigen::Index groups =
      n == 0 ? 0 : pool_group(n - 1, roll.step, target_step) + 1;
  ActivationRoll out(roll.classes, target_step, groups);
  std::vector<int> counts(static_cast<std::size_t>(groups), 0);
  if (mode == PoolMode::kMax) out.values.setConstant(-1.0);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::Index g = pool_group(t, roll.step, target_step);
    ++counts[static_cast<std::size_t>(g)];
    if (mode == PoolMode::kMax)
      out.values.col(g) = out.values.col(g).cwiseMax(roll.values.col(t));
    else
      out.values.col(g) += roll.values.col(t);
    if (roll.masked(t)) out.na_mask[static_cast<std::size_t>(g)] = 1;
  }
  for (Eigen::Index g = 0; g < groups; ++g) {
    const int k = counts[static_cast<std::size_t>(g)];
    if (k == 0)
      out.values.col(g).setZero();
    else if (mode == PoolMode::kMean)
      out.values.col(g) /= k;
  }
  return out;
}

ActivationRoll fit_steps(ActivationRoll roll, Eigen::Index n_steps) {
  const Eigen::Index old = roll.n_steps();
  if (old == n_steps) return roll;
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(roll.n_classes(), n_steps);
  const Eigen::Index keep = std::min(old, n_steps);
  values.leftCols(keep) = roll.values.leftCols(keep);
  roll.values = std::move(values);
  roll.na_mask.resize(static_cast<std::size_t>(n_steps), 0);
  return roll;
}

ActivationRoll concat_rolls(const std::vector<ActivationRoll>& rolls) {
  if (rolls.empty()) return {};
  Eigen::Index total = 0;
  for (const auto& r : rolls) {
    if (r.classes != rolls.front().classes ||
        std::abs(r.step - rolls.front().step) > kGridEps)
      throw ArgumentError("concat_rolls: incompatible rolls");
    total += r.n_steps();
  }
  ActivationRoll out(rolls.front().classes, rolls.front().step, total);
  Eigen::Index at = 0;
  for (const auto& r : rolls) {
    out.values.middleCols(at, r.n_steps()) = r.values;
    std::copy(r.na_mask.begin(), r.na_mask.end(),
              out.na_mask.begin() + static_cast<std::ptrdiff_t>(at));
    at += r.n_steps();
  }
  return out;
}

AnnotationTrack roll_to_track(const ActivationRoll& roll) {
  AnnotationTrack track;
  track.duration = static_cast<double>(roll.n_steps()) * roll.step;
  for (Eigen::Index c = 0; c < roll.n_classes(); ++c) {
    Eigen::Index t = 0;
    while (t < roll.n_steps()) {
      if (roll.values(c, t) <= 0.0) {
        ++t;
        continue;
      }
      const Eigen::Index begin = t;
      while (t < roll.n_steps() && roll.values(c, t) > 0.0) ++t;
      track.events.push_back({static_cast<double>(begin) * roll.step,
                              static_cast<double>(t) * roll.step,
                              roll.classes[static_cast<std::size_t>(c)]});
    }
  }
  std::stable_sort(track.events.begin(), track.events.end(),
                   [](const auto& a, const auto& b) { return a.start < b.start; });
  return track;
}

}  // namespace bioctx
