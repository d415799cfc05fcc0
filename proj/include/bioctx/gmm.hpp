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

#include <Eigen/Dense>

namespace bioctx {

// Diagonal-covariance Gaussian mixture.
struct Gmm {
  Eigen::VectorXd weights;  // M, sums to 1
  Eigen::MatrixXd means;    // M x D
  Eigen::MatrixXd vars;     // M x D, >= variance floor

  Eigen::Index n_components() const { return weights.size(); }
  Eigen::Index dim() const { return means.cols(); }

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  // Per-column log density for data stored D x N.
  Eigen::VectorXd log_pdf_all(const Eigen::MatrixXd& data) const;
  double log_likelihood(const Eigen::MatrixXd& data) const;
};

struct GmmOptions {
  int iters = 20;
  double var_floor = 1e-6;
};

// EM from a given starting point.
Gmm fit_gmm_em(const Eigen::MatrixXd& data, Gmm init, const GmmOptions& opts);

// k-means initialisation followed by EM.
Gmm fit_gmm(const Eigen::MatrixXd& data, int components, std::uint64_t seed,
            const GmmOptions& opts);

// -2 log L + p log N with p = (M - 1) + 2 M D.
double gmm_bic(const Gmm& gmm, const Eigen::MatrixXd& data);

// Fits M = 1..max_components (capped at the number of points) and keeps the
// lowest-BIC model; ties keep the smaller M.
Gmm select_gmm_bic(const Eigen::MatrixXd& data, int max_components, std::uint64_t seed,
                   const GmmOptions& opts);

}  // namespace bioctx
