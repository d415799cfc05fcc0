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

#include "bioctx/plca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "bioctx/cluster.hpp"
#include "bioctx/diag.hpp"
#include "bioctx/error.hpp"
#include "bioctx/serialize.hpp"

namespace bioctx {
namespace {

constexpr double kFloor = 1e-300;

void check_offsets(const Dictionary& dict) {
  if (dict.offsets.size() != dict.classes.size() + 1 || dict.offsets.front() != 0 ||
      dict.offsets.back() != dict.templates.cols())
    throw ArgumentError("dictionary offsets are inconsistent");
}

}  // namespace

Dictionary build_dictionary(const std::vector<Spectrogram>& specs,
                            const std::vector<ActivationRoll>& rolls,
                            const DictionaryOptions& opts) {
  if (specs.empty() || specs.size() != rolls.size())
    throw ArgumentError("build_dictionary: need one roll per spectrogram");
  if (opts.exemplars < 1) throw ArgumentError("build_dictionary: exemplars < 1");
  const Eigen::Index bands = specs.front().n_bands();
  const auto& classes = rolls.front().classes;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].n_bands() != bands || rolls[i].classes != classes)
      throw ArgumentError("build_dictionary: inconsistent inputs");
    if (rolls[i].n_steps() != specs[i].n_frames())
      throw ArgumentError(fmt::format("build_dictionary: roll {} has {} steps for {} frames",
                                      i, rolls[i].n_steps(), specs[i].n_frames()));
  }

  Dictionary dict;
  dict.classes = classes;
  dict.offsets = {0};
  std::vector<Eigen::MatrixXd> blocks;
  Rng rng(opts.seed);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::pair<std::size_t, Eigen::Index>> frames;
    for (std::size_t i = 0; i < specs.size(); ++i)
      for (Eigen::Index t = 0; t < specs[i].n_frames(); ++t)
        if (!rolls[i].masked(t) && rolls[i].values(static_cast<Eigen::Index>(c), t) > 0.0 &&
            specs[i].mags.col(t).sum() > 0.0)
          frames.emplace_back(i, t);
    if (static_cast<Eigen::Index>(frames.size()) > opts.max_frames) {
      // Partial Fisher-Yates, then restore time order.
      for (Eigen::Index j = 0; j < opts.max_frames; ++j) {
        const auto pick = static_cast<std::size_t>(j) +
                          uniform_index(rng, frames.size() - static_cast<std::size_t>(j));
        std::swap(frames[static_cast<std::size_t>(j)], frames[pick]);
      }
      frames.resize(static_cast<std::size_t>(opts.max_frames));
      std::sort(frames.begin(), frames.end());
    }
    if (frames.empty()) {
      warn("build_dictionary: class '" + classes[c] +
           "' has no active frames; using a uniform template");
      blocks.push_back(Eigen::MatrixXd::Constant(bands, 1, 1.0 / static_cast<double>(bands)));
    } else {
      Eigen::MatrixXd points(bands, static_cast<Eigen::Index>(frames.size()));
      for (std::size_t j = 0; j < frames.size(); ++j) {
        const auto col = specs[frames[j].first].mags.col(frames[j].second);
        points.col(static_cast<Eigen::Index>(j)) = col / col.sum();
      }
      const int k = static_cast<int>(std::min<Eigen::Index>(opts.exemplars, points.cols()));
      Eigen::MatrixXd centroids = kmeans(points, k, opts.kmeans_iters, rng).centroids;
      for (Eigen::Index e = 0; e < centroids.cols(); ++e) {
        centroids.col(e) = centroids.col(e).cwiseMax(0.0);
        centroids.col(e) /= centroids.col(e).sum();
      }
      blocks.push_back(std::move(centroids));
    }
    dict.offsets.push_back(dict.offsets.back() + blocks.back().cols());
  }
  dict.templates.resize(bands, dict.offsets.back());
  for (std::size_t c = 0; c < blocks.size(); ++c)
    dict.templates.middleCols(dict.offsets[c], blocks[c].cols()) = blocks[c];
  return dict;
}

Eigen::MatrixXd normalize_spectrogram(const Eigen::MatrixXd& v) {
  if ((v.array() < 0.0).any()) throw ArgumentError("PLCA input must be non-negative");
  const double total = v.sum();
  if (total <= 0.0) return Eigen::MatrixXd::Zero(v.rows(), v.cols());
  return v / total;
}

PlcaResult plca_initialize(const Eigen::MatrixXd& vbar, const Dictionary& dict,
                           std::uint64_t seed) {
  check_offsets(dict);
  const Eigen::Index classes = dict.n_classes();
  const Eigen::Index frames = vbar.cols();
  Rng rng(seed);
  PlcaResult r;
  r.p_t = vbar.colwise().sum().transpose();
  r.p_c_given_t.resize(classes, frames);
  r.p_e_given_ct.resize(dict.total_exemplars(), frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index c = 0; c < classes; ++c)
      r.p_c_given_t(c, t) = std::max(uniform01(rng), 1e-12);
    r.p_c_given_t.col(t) /= r.p_c_given_t.col(t).sum();
    for (Eigen::Index c = 0; c < classes; ++c) {
      const Eigen::Index off = dict.offsets[static_cast<std::size_t>(c)];
      const Eigen::Index n = dict.n_exemplars(c);
      for (Eigen::Index e = 0; e < n; ++e)
        r.p_e_given_ct(off + e, t) = std::max(uniform01(rng), 1e-12);
      r.p_e_given_ct.col(t).segment(off, n) /= r.p_e_given_ct.col(t).segment(off, n).sum();
    }
  }
  r.p_ct = r.p_c_given_t.array().rowwise() * r.p_t.transpose().array();
  return r;
}

namespace {

// Joint weights P(c|t) P(e|c,t), one row per exemplar.
Eigen::MatrixXd joint_weights(const Dictionary& dict, const PlcaResult& s) {
  Eigen::MatrixXd q = s.p_e_given_ct;
  for (Eigen::Index c = 0; c < dict.n_classes(); ++c)
    q.middleRows(dict.offsets[static_cast<std::size_t>(c)], dict.n_exemplars(c)).array()
        .rowwise() *= s.p_c_given_t.row(c).array();
  return q;
}

}  // namespace

void plca_iterate(const Eigen::MatrixXd& vbar, const Dictionary& dict, PlcaResult& s) {
  const Eigen::Index classes = dict.n_classes();
  const Eigen::MatrixXd q = joint_weights(dict, s);
  // E-step folded into the M-step sums: for each (c,e,t),
  //   sum_f P(c,e|f,t) V(f,t) = q(ce,t) * sum_f W(f,ce) V(f,t) / model(f,t).
  const Eigen::MatrixXd model = dict.templates * q;
  Eigen::MatrixXd ratio(vbar.rows(), vbar.cols());
  for (Eigen::Index t = 0; t < vbar.cols(); ++t)
    for (Eigen::Index f = 0; f < vbar.rows(); ++f)
      ratio(f, t) = vbar(f, t) > 0.0 ? vbar(f, t) / std::max(model(f, t), kFloor) : 0.0;
  const Eigen::MatrixXd mass = q.cwiseProduct(dict.templates.transpose() * ratio);

  for (Eigen::Index t = 0; t < vbar.cols(); ++t) {
    double total = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c) {
      const Eigen::Index off = dict.offsets[static_cast<std::size_t>(c)];
      const Eigen::Index n = dict.n_exemplars(c);
      const double class_mass = mass.col(t).segment(off, n).sum();
      s.p_c_given_t(c, t) = class_mass;
      total += class_mass;
      if (class_mass > kFloor)
        s.p_e_given_ct.col(t).segment(off, n) = mass.col(t).segment(off, n) / class_mass;
      else
        s.p_e_given_ct.col(t).segment(off, n).setConstant(1.0 / static_cast<double>(n));
    }
    if (total > kFloor)
      s.p_c_given_t.col(t) /= total;
    else
      s.p_c_given_t.col(t).setConstant(1.0 / static_cast<double>(classes));
  }
  s.p_ct = s.p_c_given_t.array().rowwise() * s.p_t.transpose().array();
}

PlcaResult plca_decompose(const Spectrogram& v, const Dictionary& dict,
                          const PlcaOptions& opts, const PlcaObserver& observer) {
  if (v.n_bands() != dict.n_bands())
    throw ArgumentError(fmt::format("plca_decompose: spectrogram has {} bands, dictionary {}",
                                    v.n_bands(), dict.n_bands()));
  const Eigen::MatrixXd vbar = normalize_spectrogram(v.mags);
  PlcaResult state = plca_initialize(vbar, dict, opts.seed);
  if (v.mags.sum() <= 0.0) {
    warn("plca_decompose: all-zero spectrogram; P(c|t) left at initialisation");
    return state;
  }
  for (int it = 1; it <= opts.iters; ++it) {
    plca_iterate(vbar, dict, state);
    if (observer) observer(it, state);
  }
  return state;
}

Eigen::MatrixXd plca_model(const Dictionary& dict, const PlcaResult& result) {
  Eigen::MatrixXd model = dict.templates * joint_weights(dict, result);
  model.array().rowwise() *= result.p_t.transpose().array();
  return model;
}

double kl_objective(const Spectrogram& v, const Dictionary& dict, const PlcaResult& result) {
  const Eigen::MatrixXd vbar = normalize_spectrogram(v.mags);
  const Eigen::MatrixXd model = plca_model(dict, result);
  double kl = 0.0;
  for (Eigen::Index t = 0; t < vbar.cols(); ++t)
    for (Eigen::Index f = 0; f < vbar.rows(); ++f) {
      const double p = vbar(f, t);
      if (p <= 0.0) continue;
      const double q = model(f, t);
      if (q <= 0.0) return std::numeric_limits<double>::infinity();
      kl += p * std::log(p / q);
    }
  return std::max(kl, 0.0);
}

ActivationRoll binarize_events(const ActivationRoll& scores,
                               const std::vector<double>& thresholds, double min_dur) {
  if (static_cast<Eigen::Index>(thresholds.size()) != scores.n_classes())
    throw ArgumentError("binarize_events: one threshold per class required");
  if (min_dur < 0.0) throw ArgumentError("binarize_events: negative minimum duration");
  ActivationRoll out(scores.classes, scores.step, scores.n_steps());
  out.na_mask = scores.na_mask;
  for (Eigen::Index c = 0; c < scores.n_classes(); ++c) {
    const double thr = thresholds[static_cast<std::size_t>(c)];
    if (thr < 0.0) throw ArgumentError("binarize_events: negative threshold");
    Eigen::Index t = 0;
    while (t < scores.n_steps()) {
      if (!(scores.values(c, t) >= thr)) {
        ++t;
        continue;
      }
      const Eigen::Index begin = t;
      while (t < scores.n_steps() && scores.values(c, t) >= thr) ++t;
      const double duration = static_cast<double>(t - begin) * scores.step;
      if (duration >= min_dur - 1e-12) out.values.row(c).segment(begin, t - begin).setOnes();
    }
  }
  return out;
}

Eigen::MatrixXd apply_na(const Eigen::MatrixXd& p_ct, const std::vector<std::uint8_t>& na_mask) {
  if (static_cast<Eigen::Index>(na_mask.size()) != p_ct.cols())
    throw ArgumentError("apply_na: mask length does not match frame count");
  Eigen::MatrixXd out = p_ct;
  for (Eigen::Index t = 0; t < out.cols(); ++t)
    if (na_mask[static_cast<std::size_t>(t)]) out.col(t).setZero();
  return out;
}

void save_dictionary(const std::filesystem::path& path, const Dictionary& dict) {
  check_offsets(dict);
  std::vector<Eigen::Index> counts;
  for (Eigen::Index c = 0; c < dict.n_classes(); ++c) counts.push_back(dict.n_exemplars(c));
  nlohmann::json header = {{"n_bands", dict.n_bands()},
                           {"classes", dict.classes},
                           {"exemplars", counts},
                           {"layout", "templates[n_bands][total_exemplars] row-major"}};
  std::vector<double> payload;
  payload.reserve(static_cast<std::size_t>(dict.templates.size()));
  for (Eigen::Index f = 0; f < dict.templates.rows(); ++f)
    for (Eigen::Index j = 0; j < dict.templates.cols(); ++j)
      payload.push_back(dict.templates(f, j));
  write_blob(path, "BCTXDIC1", header, payload);
}

Dictionary load_dictionary(const std::filesystem::path& path) {
  const Blob blob = read_blob(path, "BCTXDIC1");
  Dictionary dict;
  try {
    const auto bands = blob.header.at("n_bands").get<Eigen::Index>();
    dict.classes = blob.header.at("classes").get<std::vector<std::string>>();
    const auto counts = blob.header.at("exemplars").get<std::vector<Eigen::Index>>();
    if (counts.size() != dict.classes.size()) throw FormatError("exemplar count mismatch");
    dict.offsets = {0};
    for (auto n : counts) {
      if (n < 1) throw FormatError("class without exemplars");
      dict.offsets.push_back(dict.offsets.back() + n);
    }
    if (blob.payload.size() != static_cast<std::size_t>(bands * dict.offsets.back()))
      throw FormatError("dictionary payload size mismatch");
    dict.templates.resize(bands, dict.offsets.back());
    std::size_t i = 0;
    for (Eigen::Index f = 0; f < bands; ++f)
      for (Eigen::Index j = 0; j < dict.templates.cols(); ++j)
        dict.templates(f, j) = blob.payload[i++];
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return dict;
}

}  // namespace bioctx
