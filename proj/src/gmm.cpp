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

#include "bioctx/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bioctx/cluster.hpp"
#include "bioctx/error.hpp"
#include "bioctx/rng.hpp"

namespace bioctx {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// M x N per-component log(weight * density).
Eigen::MatrixXd component_log_terms(const Gmm& g, const Eigen::MatrixXd& data) {
  const Eigen::Index m = g.n_components();
  Eigen::MatrixXd out(m, data.cols());
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::VectorXd mean = g.means.row(k).transpose();
    const Eigen::ArrayXd inv_var = g.vars.row(k).transpose().array().inverse();
    const double norm = -0.5 * (static_cast<double>(g.dim()) * kLog2Pi +
                                g.vars.row(k).array().log().sum());
    const double lw = g.weights(k) > 0.0 ? std::log(g.weights(k))
                                          : -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      const Eigen::ArrayXd d = data.col(j) - mean;
      out(k, j) = lw + norm - 0.5 * (d.square() * inv_var).sum();
    }
  }
  return out;
}

}  // namespace

double Gmm::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return log_pdf_all(Eigen::MatrixXd(x))(0);
}

Eigen::VectorXd Gmm::log_pdf_all(const Eigen::MatrixXd& data) const {
  const Eigen::MatrixXd terms = component_log_terms(*this, data);
  Eigen::VectorXd out(data.cols());
  for (Eigen::Index j = 0; j < data.cols(); ++j) out(j) = log_sum_exp(terms.col(j));
  return out;
}

double Gmm::log_likelihood(const Eigen::MatrixXd& data) const { return log_pdf_all(data).sum(); }

Gmm fit_gmm_em(const Eigen::MatrixXd& data, Gmm g, const GmmOptions& opts) {
  if (data.cols() == 0) throw ArgumentError("fit_gmm_em: no data");
  if (data.rows() != g.dim()) throw ArgumentError("fit_gmm_em: dimension mismatch");
  const Eigen::Index m = g.n_components();
  const auto n = static_cast<double>(data.cols());
  g.vars = g.vars.cwiseMax(opts.var_floor);
  for (int it = 0; it < opts.iters; ++it) {
    Eigen::MatrixXd resp = component_log_terms(g, data);
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      const double lse = log_sum_exp(resp.col(j));
      resp.col(j) = (resp.col(j).array() - lse).exp();
    }
    for (Eigen::Index k = 0; k < m; ++k) {
      const double nk = resp.row(k).sum();
      g.weights(k) = nk / n;
      if (nk < 1e-10) continue;
      const Eigen::VectorXd mean = data * resp.row(k).transpose() / nk;
      Eigen::VectorXd var = Eigen::VectorXd::Zero(data.rows());
      for (Eigen::Index j = 0; j < data.cols(); ++j)
        var += resp(k, j) * (data.col(j) - mean).array().square().matrix();
      g.means.row(k) = mean.transpose();
      g.vars.row(k) = (var / nk).cwiseMax(opts.var_floor).transpose();
    }
    g.weights /= g.weights.sum();
  }
  return g;
}

Gmm fit_gmm(const Eigen::MatrixXd& data, int components, std::uint64_t seed,
            const GmmOptions& opts) {
  if (components < 1 || data.cols() < components)
    throw ArgumentError("fit_gmm: need 1 <= components <= #points");
  Rng rng(seed);
  const KMeansResult km = kmeans(data, components, 50, rng);
  Gmm g;
  g.weights = Eigen::VectorXd::Zero(components);
  g.means = km.centroids.transpose();
  g.vars = Eigen::MatrixXd::Zero(components, data.rows());
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    const auto l = km.labels[static_cast<std::size_t>(j)];
    g.weights(l) += 1.0;
    g.vars.row(l) += (data.col(j) - km.centroids.col(l)).array().square().matrix().transpose();
  }
  const Eigen::VectorXd global_var =
      (data.colwise() - data.rowwise().mean()).array().square().rowwise().mean();
  for (Eigen::Index k = 0; k < components; ++k) {
    if (g.weights(k) > 1.0)
      g.vars.row(k) /= g.weights(k);
    else
      g.vars.row(k) = global_var.transpose();
  }
  g.vars = g.vars.cwiseMax(opts.var_floor);
  g.weights /= g.weights.sum();
  return fit_gmm_em(data, std::move(g), opts);
}

double gmm_bic(const Gmm& gmm, const Eigen::MatrixXd& data) {
  const double m = static_cast<double>(gmm.n_components());
  const double d = static_cast<double>(gmm.dim());
  const double params = (m - 1.0) + 2.0 * m * d;
  return -2.0 * gmm.log_likelihood(data) + params * std::log(static_cast<double>(data.cols()));
}

Gmm select_gmm_bic(const Eigen::MatrixXd& data, int max_components, std::uint64_t seed,
                   const GmmOptions& opts) {
  if (data.cols() == 0) throw ArgumentError("select_gmm_bic: no data");
  const int top = std::max(1, std::min<int>(max_components, static_cast<int>(data.cols())));
  Gmm best;
  double best_bic = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= top; ++m) {
    Gmm g = fit_gmm(data, m, derive_seed(seed, static_cast<std::uint64_t>(m)), opts);
    const double bic = gmm_bic(g, data);
    if (m == 1 || bic < best_bic) {
      best = std::move(g);
      best_bic = bic;
    }
  }
  return best;
}

}  // namespace bioctx
