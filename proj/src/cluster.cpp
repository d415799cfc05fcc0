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

#include "bioctx/cluster.hpp"

#include <algorithm>
#include <limits>

#include "bioctx/error.hpp"

namespace bioctx {

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int max_iters, Rng& rng) {
  const Eigen::Index n = points.cols();
  if (k < 1 || n < k) throw ArgumentError("kmeans: need 1 <= k <= #points");
  KMeansResult out;
  out.centroids.resize(points.rows(), k);

  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Eigen::Index chosen = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
  for (int c = 0; c < k; ++c) {
    out.centroids.col(c) = points.col(chosen);
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      auto& d = d2[static_cast<std::size_t>(j)];
      d = std::min(d, (points.col(j) - out.centroids.col(c)).squaredNorm());
      total += d;
    }
    if (c + 1 == k) break;
    if (total <= 0.0) {
      chosen = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
      continue;
    }
    double r = uniform01(rng) * total;
    chosen = n - 1;
    for (Eigen::Index j = 0; j < n; ++j) {
      r -= d2[static_cast<std::size_t>(j)];
      if (r < 0.0) {
        chosen = j;
        break;
      }
    }
  }

  out.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    const Eigen::VectorXd cnorm = out.centroids.colwise().squaredNorm().transpose();
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd scores =
          cnorm - 2.0 * out.centroids.transpose() * points.col(j);
      Eigen::Index best = 0;
      scores.minCoeff(&best);
      auto& label = out.labels[static_cast<std::size_t>(j)];
      if (label != best) changed = true;
      label = best;
      dist[static_cast<std::size_t>(j)] = (points.col(j) - out.centroids.col(best)).squaredNorm();
    }
    out.iterations = it + 1;
    if (!changed && it > 0) break;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(points.rows(), k);
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto l = out.labels[static_cast<std::size_t>(j)];
      sums.col(l) += points.col(j);
      ++counts[static_cast<std::size_t>(l)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        out.centroids.col(c) = sums.col(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
      out.centroids.col(c) = points.col(far);
      dist[static_cast<std::size_t>(far)] = 0.0;
      changed = true;
    }
  }
  return out;
}

}  // namespace bioctx
