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

#include "bioctx/featlearn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "bioctx/error.hpp"
#include "bioctx/rng.hpp"
#include "bioctx/serialize.hpp"

namespace bioctx {
namespace {

constexpr Eigen::Index kBlock = 4096;

// Scales each column to unit norm; zero columns stay zero.
void normalize_columns(Eigen::MatrixXd& x) {
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double n = x.col(j).norm();
    if (n > 0.0) x.col(j) /= n;
  }
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& patches, const FeatureBasis& basis) {
  Eigen::MatrixXd x = patches;
  x.colwise() -= basis.d_mean;
  x.array().colwise() /= basis.d_std.array();
  return x;
}

struct Assignment {
  std::vector<Eigen::Index> label;  // -1 for zero patches
  double objective = 0.0;
};

Assignment assign(const Eigen::MatrixXd& centroids, const Eigen::MatrixXd& x,
                  const std::vector<bool>& nonzero) {
  Assignment out;
  out.label.assign(static_cast<std::size_t>(x.cols()), -1);
  double total = 0.0;
  std::size_t count = 0;
  for (Eigen::Index start = 0; start < x.cols(); start += kBlock) {
    const Eigen::Index n = std::min(kBlock, x.cols() - start);
    const Eigen::MatrixXd sims = centroids * x.middleCols(start, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto idx = static_cast<std::size_t>(start + j);
      if (!nonzero[idx]) continue;
      Eigen::Index best = 0;
      sims.col(j).maxCoeff(&best);  // first maximum: lowest index wins ties
      out.label[idx] = best;
      total += sims(best, j);
      ++count;
    }
  }
  out.objective = count ? total / static_cast<double>(count) : 0.0;
  return out;
}

double max_norm_error(const Eigen::MatrixXd& centroids) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < centroids.rows(); ++k)
    worst = std::max(worst, std::abs(centroids.row(k).norm() - 1.0));
  return worst;
}

}  // namespace

Eigen::MatrixXd extract_patches(const Spectrogram& spec, int patch_frames, int stride) {
  if (patch_frames < 1 || stride < 1)
    throw ArgumentError("extract_patches: patch_frames and stride must be >= 1");
  const Eigen::Index t_total = spec.n_frames();
  if (t_total < patch_frames)
    throw ArgumentError(fmt::format("extract_patches: {} frames < patch width {}",
                                    t_total, patch_frames));
  const Eigen::Index bands = spec.n_bands();
  const Eigen::Index count = (t_total - patch_frames) / stride + 1;
  Eigen::MatrixXd out(bands * patch_frames, count);
  for (Eigen::Index j = 0; j < count; ++j) {
    const Eigen::Index t = j * stride;
    for (int i = 0; i < patch_frames; ++i)
      out.col(j).segment(i * bands, bands) = spec.mags.col(t + i);
  }
  return out;
}

FeatureBasis fit_basis(const Eigen::MatrixXd& patches, const BasisFitOptions& opts,
                       BasisFitTrace* trace) {
  const Eigen::Index dim = patches.rows();
  const Eigen::Index n = patches.cols();
  if (opts.k < 1) throw ArgumentError("fit_basis: k must be >= 1");
  if (opts.patch_frames < 1 || dim % opts.patch_frames != 0)
    throw ArgumentError("fit_basis: patch dimension not divisible by patch_frames");
  if (n < opts.k)
    throw DataError(fmt::format("fit_basis: {} patches for {} centroids", n, opts.k));

  FeatureBasis basis;
  basis.d_mean = patches.rowwise().mean();
  const Eigen::MatrixXd centered = patches.colwise() - basis.d_mean;
  basis.d_std = (centered.array().square().rowwise().sum() / static_cast<double>(n)).sqrt();
  // Floor relative to the typical spread, so near-silent dimensions are not
  // amplified into noise.
  const double floor = std::max(1e-6, 0.1 * basis.d_std.mean());
  basis.d_std = basis.d_std.cwiseMax(floor);

  Eigen::MatrixXd x = centered;
  x.array().colwise() /= basis.d_std.array();
  std::vector<bool> nonzero(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> candidates;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double norm = x.col(j).norm();
    nonzero[static_cast<std::size_t>(j)] = norm > 0.0;
    if (norm > 0.0) {
      x.col(j) /= norm;
      candidates.push_back(j);
    }
  }
  if (candidates.empty())
    throw DataError("fit_basis: every patch is degenerate after standardisation");

  Rng rng(opts.seed);
  Eigen::MatrixXd centroids(opts.k, dim);

  // k-means++ seeding with cosine distance 1 - cos.
  std::vector<double> dist(candidates.size(), std::numeric_limits<double>::infinity());
  Eigen::Index chosen = candidates[uniform_index(rng, candidates.size())];
  for (int k = 0; k < opts.k; ++k) {
    centroids.row(k) = x.col(chosen).transpose();
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double d = std::max(0.0, 1.0 - x.col(candidates[i]).dot(x.col(chosen)));
      dist[i] = std::min(dist[i], d * d);
      total += dist[i];
    }
    if (k + 1 == opts.k) break;
    if (total <= 0.0) {
      chosen = candidates[uniform_index(rng, candidates.size())];
      continue;
    }
    double r = uniform01(rng) * total;
    std::size_t pick = candidates.size() - 1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      r -= dist[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    chosen = candidates[pick];
  }

  Assignment a = assign(centroids, x, nonzero);
  if (trace) {
    trace->objective = {a.objective};
    trace->max_norm_error = {max_norm_error(centroids)};
  }
  for (int it = 0; it < opts.iters; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(opts.k, dim);
    std::vector<int> members(static_cast<std::size_t>(opts.k), 0);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index l = a.label[static_cast<std::size_t>(j)];
      if (l < 0) continue;
      sums.row(l) += x.col(j).transpose();
      ++members[static_cast<std::size_t>(l)];
    }
    for (int k = 0; k < opts.k; ++k) {
      const double norm = sums.row(k).norm();
      if (members[static_cast<std::size_t>(k)] == 0) {
        centroids.row(k) =
            x.col(candidates[uniform_index(rng, candidates.size())]).transpose();
      } else if (norm > 0.0) {
        centroids.row(k) = sums.row(k) / norm;
      }
    }
    a = assign(centroids, x, nonzero);
    if (trace) {
      trace->objective.push_back(a.objective);
      trace->max_norm_error.push_back(max_norm_error(centroids));
    }
  }

  basis.centroids = std::move(centroids);
  basis.patch_frames = opts.patch_frames;
  basis.n_bands = static_cast<int>(dim / opts.patch_frames);
  return basis;
}

Eigen::MatrixXd project_patches(const Eigen::MatrixXd& patches, const FeatureBasis& basis) {
  if (patches.rows() != basis.dim())
    throw ArgumentError("project: patch dimension does not match basis");
  Eigen::MatrixXd x = standardize(patches, basis);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (patches.col(j).squaredNorm() == 0.0) x.col(j).setZero();
  normalize_columns(x);
  Eigen::MatrixXd out(patches.cols(), basis.k());
  for (Eigen::Index start = 0; start < x.cols(); start += kBlock) {
    const Eigen::Index n = std::min(kBlock, x.cols() - start);
    out.middleRows(start, n) =
        (basis.centroids * x.middleCols(start, n)).transpose().cwiseMax(0.0);
  }
  return out;
}

Eigen::MatrixXd project(const Spectrogram& spec, const FeatureBasis& basis) {
  if (spec.n_bands() != basis.n_bands)
    throw ArgumentError(fmt::format("project: spectrogram has {} bands, basis {}",
                                    spec.n_bands(), basis.n_bands));
  return project_patches(extract_patches(spec, basis.patch_frames, 1), basis);
}

SegmentFeatures summarize(const Eigen::MatrixXd& frame_features,
                          const SegmentBounds& bounds, double segment_step) {
  const Eigen::Index k = frame_features.cols();
  SegmentFeatures out;
  out.segment_step = segment_step;
  out.vectors.resize(static_cast<Eigen::Index>(bounds.size()), 2 * k);
  for (std::size_t s = 0; s < bounds.size(); ++s) {
    const auto [begin, end] = bounds[s];
    if (begin < 0 || end > frame_features.rows() || end <= begin)
      throw ArgumentError(fmt::format("summarize: empty or out-of-range segment {}", s));
    const auto rows = frame_features.middleRows(begin, end - begin);
    const Eigen::RowVectorXd mean = rows.colwise().mean();
    Eigen::RowVectorXd sd = Eigen::RowVectorXd::Zero(k);
    if (end - begin >= 2)
      sd = ((rows.rowwise() - mean).array().square().colwise().sum() /
            static_cast<double>(end - begin))
               .sqrt();
    const auto r = static_cast<Eigen::Index>(s);
    out.vectors.row(r).head(k) = mean;
    out.vectors.row(r).tail(k) = sd;
  }
  return out;
}

void save_basis(const std::filesystem::path& path, const FeatureBasis& basis) {
  const Eigen::Index k = basis.k();
  const Eigen::Index d = basis.dim();
  nlohmann::json header = {{"k", k},
                           {"dim", d},
                           {"patch_frames", basis.patch_frames},
                           {"n_bands", basis.n_bands},
                           {"layout", "centroids[k][dim] row-major, d_mean[dim], d_std[dim]"}};
  std::vector<double> payload;
  payload.reserve(static_cast<std::size_t>(k * d + 2 * d));
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < d; ++j) payload.push_back(basis.centroids(i, j));
  for (Eigen::Index j = 0; j < d; ++j) payload.push_back(basis.d_mean(j));
  for (Eigen::Index j = 0; j < d; ++j) payload.push_back(basis.d_std(j));
  write_blob(path, "BCTXBAS1", header, payload);
}

FeatureBasis load_basis(const std::filesystem::path& path) {
  const Blob blob = read_blob(path, "BCTXBAS1");
  FeatureBasis basis;
  try {
    const auto k = blob.header.at("k").get<Eigen::Index>();
    const auto d = blob.header.at("dim").get<Eigen::Index>();
    basis.patch_frames = blob.header.at("patch_frames").get<int>();
    basis.n_bands = blob.header.at("n_bands").get<int>();
    if (k < 1 || d < 1 || d != Eigen::Index{basis.patch_frames} * basis.n_bands)
      throw FormatError("inconsistent basis dimensions");
    PayloadReader in(blob.payload);
    basis.centroids.resize(k, d);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = 0; j < d; ++j) basis.centroids(i, j) = in.next();
    basis.d_mean.resize(d);
    basis.d_std.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) basis.d_mean(j) = in.next();
    for (Eigen::Index j = 0; j < d; ++j) basis.d_std(j) = in.next();
    if (!in.done()) throw FormatError("trailing payload");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return basis;
}

}  // namespace bioctx
