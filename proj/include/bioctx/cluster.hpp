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

#include <Eigen/Dense>

#include "bioctx/rng.hpp"

namespace bioctx {

struct KMeansResult {
  Eigen::MatrixXd centroids;           // D x k
  std::vector<Eigen::Index> labels;    // per point
  int iterations = 0;
};

// Euclidean k-means over the columns of `points` with k-means++ seeding.
// Stops when assignments no longer change or after max_iters rounds. Empty
// clusters are reseeded with the point farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, int max_iters, Rng& rng);

}  // namespace bioctx
