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
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bioctx/frontend.hpp"

namespace bioctx {

// Spherical k-means dictionary over standardised spectrogram patches.
struct FeatureBasis {
  Eigen::MatrixXd centroids;  // K x D, unit rows
  Eigen::VectorXd d_mean;     // D
  Eigen::VectorXd d_std;      // D, > 0
  int patch_frames = 4;
  int n_bands = 0;            // D = patch_frames * n_bands

  Eigen::Index k() const { return centroids.rows(); }
  Eigen::Index dim() const { return centroids.cols(); }
};

struct SegmentFeatures {
  Eigen::MatrixXd vectors;  // S x 2K: K means, then K standard deviations
  double segment_step = 5.0;
};

// Columns are patches (D x n). Patch column j stacks frames t..t+p-1, frame
// by frame: element (i * n_bands + b) is mags(b, t + i).
Eigen::MatrixXd extract_patches(const Spectrogram& spec, int patch_frames,
                                int stride);

struct BasisFitOptions {
  int k = 500;
  int iters = 1;
  int patch_frames = 4;  // patch layout, recorded in the basis
  std::uint64_t seed = 0;
};

// Per-iteration diagnostics. objective[i] is the mean cosine between
// (non-zero) patches and their assigned centroid at assignment round i; round
// 0 follows seeding. max_norm_error[i] is max | ||c_k|| - 1 | after round i.
struct BasisFitTrace {
  std::vector<double> objective;
  std::vector<double> max_norm_error;
};

// Standardises and L2-normalises the patches, seeds k-means++ style on
// cosine distance, then runs `iters` full assignment/update passes.
// Throws DataError when there are fewer patches than centroids.
FeatureBasis fit_basis(const Eigen::MatrixXd& patches, const BasisFitOptions& opts,
                       BasisFitTrace* trace = nullptr);

// Frame features (T' x K), stride 1: y_k = max(0, c_k . xhat).
Eigen::MatrixXd project(const Spectrogram& spec, const FeatureBasis& basis);

// Projection of prepared patch columns; used by project() and tests that
// bypass standardisation.
Eigen::MatrixXd project_patches(const Eigen::MatrixXd& patches,
                                const FeatureBasis& basis);

using SegmentBounds = std::vector<std::pair<Eigen::Index, Eigen::Index>>;

// Population mean/std per feature over each [begin, end) row range.
SegmentFeatures summarize(const Eigen::MatrixXd& frame_features,
                          const SegmentBounds& bounds, double segment_step);

void save_basis(const std::filesystem::path& path, const FeatureBasis& basis);
FeatureBasis load_basis(const std::filesystem::path& path);

}  // namespace bioctx
