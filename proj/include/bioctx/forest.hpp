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

#include "bioctx/featlearn.hpp"
#include "bioctx/roll.hpp"

namespace bioctx {

enum class ClassWeighting { kUnbalanced, kBalanced };

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
};

// Multi-output tree; leaf_values(c, node) is the weighted positive fraction
// of class c among the training rows that reached the node.
struct DecisionTree {
  std::vector<TreeNode> nodes;
  Eigen::MatrixXd leaf_values;

  int leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  int n_classes = 0;
  int n_features = 0;
  Eigen::VectorXd positive_weights;  // per class
  Eigen::VectorXd negative_weights;  // per class
  std::uint64_t seed = 0;
};

struct ForestOptions {
  int n_trees = 200;
  ClassWeighting weighting = ClassWeighting::kUnbalanced;
  std::uint64_t seed = 0;
  int max_features = 0;       // 0 -> floor(sqrt(n_features))
  int min_samples_split = 2;
  bool bootstrap = true;      // false: every tree sees every row once
  int jobs = 1;
};

struct ForestFit {
  ForestModel model;
  // classes x rows; each row scored only by trees that did not see it in
  // their bootstrap sample (all trees for rows that were never out of bag).
  Eigen::MatrixXd oob_scores;
};

// x: rows x features; y: classes x rows, entries in {0, 1}. Splits maximise
// the summed weighted binary-entropy reduction over classes.
ForestFit train_forest(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                       const ForestOptions& opts);

// Drops NA-masked segments before training.
ForestFit train_forest(const SegmentFeatures& x, const ActivationRoll& y,
                       const ForestOptions& opts);

// classes x rows; mean over trees of the leaf fractions.
Eigen::MatrixXd predict_proba(const ForestModel& model, const Eigen::MatrixXd& x);
ActivationRoll predict_proba(const ForestModel& model, const SegmentFeatures& x,
                             const std::vector<std::string>& classes);

std::string encode_forest(const ForestModel& model);
std::uint64_t model_hash(const ForestModel& model);
void save_forest(const std::filesystem::path& path, const ForestModel& model);
ForestModel load_forest(const std::filesystem::path& path);

}  // namespace bioctx
