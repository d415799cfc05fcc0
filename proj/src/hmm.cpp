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

#include "bioctx/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "bioctx/diag.hpp"
#include "bioctx/error.hpp"
#include "bioctx/rng.hpp"
#include "bioctx/serialize.hpp"

namespace bioctx {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Run {
  std::size_t seq;
  Eigen::Index begin;
  Eigen::Index end;
};

// Maximal unmasked runs of every sequence.
std::vector<Run> unmasked_runs(const std::vector<ActivationRoll>& a,
                               const std::vector<ActivationRoll>* b) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto masked = [&](Eigen::Index t) {
      return a[i].masked(t) || (b != nullptr && (*b)[i].masked(t));
    };
    Eigen::Index t = 0;
    while (t < a[i].n_steps()) {
      if (masked(t)) {
        ++t;
        continue;
      }
      const Eigen::Index begin = t;
      while (t < a[i].n_steps() && !masked(t)) ++t;
      runs.push_back({i, begin, t});
    }
  }
  return runs;
}

std::uint64_t truth_bits(const ActivationRoll& truth, Eigen::Index t) {
  std::uint64_t bits = 0;
  for (Eigen::Index c = 0; c < truth.n_classes(); ++c)
    if (truth.values(c, t) > 0.5) bits |= std::uint64_t{1} << c;
  return bits;
}

// Emission GMM for one state: refit from the UBM on the state's data.
Gmm state_gmm(const Gmm& ubm, const Eigen::MatrixXd& data, const HmmTrainOptions& opts,
              const std::string& what) {
  if (data.cols() == 0) {
    warn(what + ": no observations, emission falls back to the background model");
    return ubm;
  }
  Gmm init = ubm;
  if (data.cols() < ubm.n_components()) {
    const Eigen::Index keep = data.cols();
    warn(fmt::format("{}: {} observations, emission reduced to {} components", what,
                     data.cols(), keep));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(ubm.n_components()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return ubm.weights(a) > ubm.weights(b);
    });
    init.weights.resize(keep);
    init.means.resize(keep, ubm.dim());
    init.vars.resize(keep, ubm.dim());
    for (Eigen::Index k = 0; k < keep; ++k) {
      const Eigen::Index src = order[static_cast<std::size_t>(k)];
      init.weights(k) = ubm.weights(src);
      init.means.row(k) = ubm.means.row(src);
      init.vars.row(k) = ubm.vars.row(src);
    }
    init.weights /= init.weights.sum();
  }
  return fit_gmm_em(data, std::move(init), {opts.state_iters, opts.var_floor});
}

// Trains one HMM whose state at each step is state_of(seq, t) and whose
// observation is obs_of(seq, t).
template <typename StateOf, typename ObsOf>
Hmm train_one(const std::vector<Run>& runs, std::vector<std::uint64_t> states, int obs_dim,
              StateOf state_of, ObsOf obs_of, const HmmTrainOptions& opts,
              std::uint64_t seed, const std::string& name) {
  Hmm hmm;
  hmm.states = std::move(states);
  hmm.obs_dim = obs_dim;
  const Eigen::Index s = hmm.n_states();
  std::map<std::uint64_t, Eigen::Index> index;
  for (Eigen::Index i = 0; i < s; ++i) index[hmm.states[static_cast<std::size_t>(i)]] = i;

  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(s, s);
  Eigen::VectorXd init_counts = Eigen::VectorXd::Zero(s);
  std::vector<std::vector<Eigen::VectorXd>> per_state(static_cast<std::size_t>(s));
  Eigen::Index total = 0;
  for (const Run& r : runs) total += r.end - r.begin;
  Eigen::MatrixXd all(obs_dim, total);
  Eigen::Index at = 0;
  for (const Run& r : runs) {
    Eigen::Index prev = -1;
    for (Eigen::Index t = r.begin; t < r.end; ++t) {
      const Eigen::Index cur = index.at(state_of(r.seq, t));
      const Eigen::VectorXd o = obs_of(r.seq, t);
      all.col(at++) = o;
      per_state[static_cast<std::size_t>(cur)].push_back(o);
      if (prev < 0)
        init_counts(cur) += 1.0;
      else
        counts(prev, cur) += 1.0;
      prev = cur;
    }
  }
  hmm.trans.resize(s, s);
  for (Eigen::Index i = 0; i < s; ++i)
    hmm.trans.row(i) = (counts.row(i).array() + 1.0) / (counts.row(i).sum() + static_cast<double>(s));
  hmm.initial = (init_counts.array() + 1.0) / (init_counts.sum() + static_cast<double>(s));

  const Gmm ubm = select_gmm_bic(all, opts.max_components, seed,
                                 {opts.ubm_iters, opts.var_floor});
  for (Eigen::Index i = 0; i < s; ++i) {
    const auto& obs = per_state[static_cast<std::size_t>(i)];
    Eigen::MatrixXd data(obs_dim, static_cast<Eigen::Index>(obs.size()));
    for (std::size_t j = 0; j < obs.size(); ++j) data.col(static_cast<Eigen::Index>(j)) = obs[j];
    hmm.emissions.push_back(state_gmm(
        ubm, data, opts, fmt::format("{} state {}", name, hmm.states[static_cast<std::size_t>(i)])));
  }
  return hmm;
}

}  // namespace

Eigen::MatrixXd Hmm::log_emissions(const Eigen::MatrixXd& obs) const {
  if (obs.rows() != obs_dim)
    throw ArgumentError(fmt::format("HMM expects {}-dimensional observations, got {}", obs_dim,
                                    obs.rows()));
  Eigen::MatrixXd out(n_states(), obs.cols());
  for (Eigen::Index s = 0; s < n_states(); ++s)
    out.row(s) = emissions[static_cast<std::size_t>(s)].log_pdf_all(obs).transpose();
  return out;
}

HmmSmoother train_hmm(const std::vector<ActivationRoll>& observations,
                      const std::vector<ActivationRoll>& truth, HmmKind kind,
                      const HmmTrainOptions& opts) {
  if (observations.empty() || observations.size() != truth.size())
    throw ArgumentError("train_hmm: need aligned observation and state sequences");
  const auto& classes = truth.front().classes;
  if (classes.size() > 64) throw ArgumentError("train_hmm: at most 64 classes");
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (observations[i].n_steps() != truth[i].n_steps() ||
        observations[i].n_classes() != truth[i].n_classes() || truth[i].classes != classes)
      throw ArgumentError("train_hmm: sequence shapes differ");

  const std::vector<Run> runs = unmasked_runs(truth, &observations);
  if (runs.empty()) throw DataError("train_hmm: no unmasked training steps");

  HmmSmoother sm;
  sm.kind = kind;
  sm.classes = classes;
  const auto n_classes = static_cast<Eigen::Index>(classes.size());
  if (kind == HmmKind::kJoint) {
    std::vector<std::uint64_t> states;
    for (const Run& r : runs)
      for (Eigen::Index t = r.begin; t < r.end; ++t) states.push_back(truth_bits(truth[r.seq], t));
    std::sort(states.begin(), states.end());
    states.erase(std::unique(states.begin(), states.end()), states.end());
    sm.models.push_back(train_one(
        runs, std::move(states), static_cast<int>(n_classes),
        [&](std::size_t i, Eigen::Index t) { return truth_bits(truth[i], t); },
        [&](std::size_t i, Eigen::Index t) {
          return Eigen::VectorXd(observations[i].values.col(t));
        },
        opts, opts.seed, "joint HMM"));
  } else {
    for (Eigen::Index c = 0; c < n_classes; ++c) {
      sm.models.push_back(train_one(
          runs, {0, 1}, 1,
          [&](std::size_t i, Eigen::Index t) {
            return static_cast<std::uint64_t>(truth[i].values(c, t) > 0.5 ? 1 : 0);
          },
          [&](std::size_t i, Eigen::Index t) {
            return Eigen::VectorXd::Constant(1, observations[i].values(c, t)).eval();
          },
          opts, derive_seed(opts.seed, static_cast<std::uint64_t>(c)),
          "HMM '" + classes[static_cast<std::size_t>(c)] + "'"));
    }
  }
  return sm;
}

std::vector<int> viterbi_path(const Eigen::MatrixXd& trans, const Eigen::VectorXd& initial,
                              const Eigen::MatrixXd& log_emissions) {
  const Eigen::Index s = trans.rows();
  const Eigen::Index t_len = log_emissions.cols();
  if (t_len == 0) return {};
  if (log_emissions.rows() != s || initial.size() != s || trans.cols() != s)
    throw ArgumentError("viterbi: dimension mismatch");
  const Eigen::MatrixXd log_trans = trans.array().log();
  Eigen::MatrixXd delta(s, t_len);
  Eigen::MatrixXi back(s, t_len);
  delta.col(0) = initial.array().log().matrix() + log_emissions.col(0);
  for (Eigen::Index t = 1; t < t_len; ++t) {
    for (Eigen::Index j = 0; j < s; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (Eigen::Index i = 0; i < s; ++i) {
        const double v = delta(i, t - 1) + log_trans(i, j);
        if (v > best) {
          best = v;
          arg = static_cast<int>(i);
        }
      }
      delta(j, t) = best + log_emissions(j, t);
      back(j, t) = arg;
    }
  }
  std::vector<int> path(static_cast<std::size_t>(t_len));
  Eigen::Index last = 0;
  double best = kNegInf;
  for (Eigen::Index j = 0; j < s; ++j)
    if (delta(j, t_len - 1) > best) {
      best = delta(j, t_len - 1);
      last = j;
    }
  path.back() = static_cast<int>(last);
  for (Eigen::Index t = t_len - 1; t > 0; --t)
    path[static_cast<std::size_t>(t - 1)] = back(path[static_cast<std::size_t>(t)], t);
  return path;
}

double path_log_probability(const Eigen::MatrixXd& trans, const Eigen::VectorXd& initial,
                            const Eigen::MatrixXd& log_emissions, const std::vector<int>& path) {
  if (path.empty()) return 0.0;
  double lp = std::log(initial(path[0])) + log_emissions(path[0], 0);
  for (std::size_t t = 1; t < path.size(); ++t)
    lp += std::log(trans(path[t - 1], path[t])) +
          log_emissions(path[t], static_cast<Eigen::Index>(t));
  return lp;
}

Eigen::MatrixXd forward_filter(const Eigen::MatrixXd& trans, const Eigen::VectorXd& initial,
                               const Eigen::MatrixXd& log_emissions) {
  const Eigen::Index s = trans.rows();
  const Eigen::Index t_len = log_emissions.cols();
  if (log_emissions.rows() != s || initial.size() != s)
    throw ArgumentError("forward_filter: dimension mismatch");
  Eigen::MatrixXd post(s, t_len);
  Eigen::VectorXd prior = initial;
  for (Eigen::Index t = 0; t < t_len; ++t) {
    if (t > 0) prior = trans.transpose() * post.col(t - 1);
    const double peak = log_emissions.col(t).maxCoeff();
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(s);
    if (std::isfinite(peak))
      alpha = prior.array() * (log_emissions.col(t).array() - peak).exp();
    const double z = alpha.sum();
    if (z > 0.0 && std::isfinite(z)) {
      post.col(t) = alpha / z;
    } else {
      warn(fmt::format("forward_filter: zero emission likelihood at step {}", t));
      post.col(t).setConstant(1.0 / static_cast<double>(s));
    }
  }
  return post;
}

std::vector<int> viterbi(const Hmm& model, const Eigen::MatrixXd& obs) {
  if (obs.cols() == 0) return {};
  return viterbi_path(model.trans, model.initial, model.log_emissions(obs));
}

Eigen::MatrixXd forward_filter(const Hmm& model, const Eigen::MatrixXd& obs) {
  return forward_filter(model.trans, model.initial, model.log_emissions(obs));
}

ActivationRoll smooth(const ActivationRoll& scores, const HmmSmoother& sm, DecodeMode mode) {
  if (scores.classes.size() != sm.classes.size())
    throw ArgumentError("smooth: class count does not match the HMM");
  ActivationRoll out(scores.classes, scores.step, scores.n_steps());
  out.na_mask = scores.na_mask;
  const std::vector<ActivationRoll> one{scores};
  for (const Run& r : unmasked_runs(one, nullptr)) {
    const Eigen::Index len = r.end - r.begin;
    if (sm.kind == HmmKind::kJoint) {
      const Hmm& hmm = sm.models.front();
      const Eigen::MatrixXd obs = scores.values.middleCols(r.begin, len);
      if (mode == DecodeMode::kViterbi) {
        const auto path = viterbi(hmm, obs);
        for (Eigen::Index t = 0; t < len; ++t) {
          const std::uint64_t bits = hmm.states[static_cast<std::size_t>(path[static_cast<std::size_t>(t)])];
          for (Eigen::Index c = 0; c < out.n_classes(); ++c)
            out.values(c, r.begin + t) = (bits >> c) & 1u ? 1.0 : 0.0;
        }
      } else {
        const Eigen::MatrixXd post = forward_filter(hmm, obs);
        for (Eigen::Index s = 0; s < hmm.n_states(); ++s) {
          const std::uint64_t bits = hmm.states[static_cast<std::size_t>(s)];
          for (Eigen::Index c = 0; c < out.n_classes(); ++c)
            if ((bits >> c) & 1u) out.values.row(c).segment(r.begin, len) += post.row(s);
        }
      }
    } else {
      for (Eigen::Index c = 0; c < out.n_classes(); ++c) {
        const Hmm& hmm = sm.models[static_cast<std::size_t>(c)];
        const Eigen::MatrixXd obs = scores.values.row(c).segment(r.begin, len);
        if (mode == DecodeMode::kViterbi) {
          const auto path = viterbi(hmm, obs);
          for (Eigen::Index t = 0; t < len; ++t)
            out.values(c, r.begin + t) =
                hmm.states[static_cast<std::size_t>(path[static_cast<std::size_t>(t)])] ? 1.0 : 0.0;
        } else {
          const Eigen::MatrixXd post = forward_filter(hmm, obs);
          for (Eigen::Index s = 0; s < hmm.n_states(); ++s)
            if (hmm.states[static_cast<std::size_t>(s)])
              out.values.row(c).segment(r.begin, len) += post.row(s);
        }
      }
    }
  }
  out.values = out.values.cwiseMin(1.0).cwiseMax(0.0);
  return out;
}

void save_hmm(const std::filesystem::path& path, const HmmSmoother& sm) {
  nlohmann::json models = nlohmann::json::array();
  std::vector<double> payload;
  for (const Hmm& h : sm.models) {
    nlohmann::json m;
    m["states"] = h.states;
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < h.trans.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < h.trans.cols(); ++j) row.push_back(h.trans(i, j));
      rows.push_back(row);
    }
    m["trans"] = rows;
    m["initial"] = std::vector<double>(h.initial.data(), h.initial.data() + h.initial.size());
    m["obs_dim"] = h.obs_dim;
    std::vector<Eigen::Index> comps;
    for (const Gmm& g : h.emissions) {
      comps.push_back(g.n_components());
      for (Eigen::Index k = 0; k < g.n_components(); ++k) payload.push_back(g.weights(k));
      for (Eigen::Index k = 0; k < g.n_components(); ++k)
        for (Eigen::Index d = 0; d < g.dim(); ++d) payload.push_back(g.means(k, d));
      for (Eigen::Index k = 0; k < g.n_components(); ++k)
        for (Eigen::Index d = 0; d < g.dim(); ++d) payload.push_back(g.vars(k, d));
    }
    m["components"] = comps;
    models.push_back(std::move(m));
  }
  nlohmann::json header = {
      {"kind", sm.kind == HmmKind::kJoint ? "joint" : "per_class"},
      {"classes", sm.classes},
      {"models", models},
      {"layout", "per model, per state GMM: weights[M], means[M][obs_dim], vars[M][obs_dim]"}};
  write_blob(path, "BCTXHMM1", header, payload);
}

HmmSmoother load_hmm(const std::filesystem::path& path) {
  const Blob blob = read_blob(path, "BCTXHMM1");
  HmmSmoother sm;
  try {
    const auto& h = blob.header;
    const std::string kind = h.at("kind").get<std::string>();
    if (kind != "joint" && kind != "per_class") throw FormatError("unknown HMM kind " + kind);
    sm.kind = kind == "joint" ? HmmKind::kJoint : HmmKind::kPerClass;
    sm.classes = h.at("classes").get<std::vector<std::string>>();
    PayloadReader in(blob.payload);
    for (const auto& m : h.at("models")) {
      Hmm hmm;
      hmm.states = m.at("states").get<std::vector<std::uint64_t>>();
      hmm.obs_dim = m.at("obs_dim").get<int>();
      const auto s = hmm.n_states();
      const auto rows = m.at("trans").get<std::vector<std::vector<double>>>();
      const auto init = m.at("initial").get<std::vector<double>>();
      const auto comps = m.at("components").get<std::vector<Eigen::Index>>();
      if (static_cast<Eigen::Index>(rows.size()) != s ||
          static_cast<Eigen::Index>(init.size()) != s ||
          static_cast<Eigen::Index>(comps.size()) != s || hmm.obs_dim < 1)
        throw FormatError("HMM shape mismatch");
      hmm.trans.resize(s, s);
      for (Eigen::Index i = 0; i < s; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != s)
          throw FormatError("HMM transition row length mismatch");
        for (Eigen::Index j = 0; j < s; ++j)
          hmm.trans(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
      hmm.initial = Eigen::Map<const Eigen::VectorXd>(init.data(), s);
      for (Eigen::Index m_count : comps) {
        Gmm g;
        g.weights.resize(m_count);
        g.means.resize(m_count, hmm.obs_dim);
        g.vars.resize(m_count, hmm.obs_dim);
        for (Eigen::Index k = 0; k < m_count; ++k) g.weights(k) = in.next();
        for (Eigen::Index k = 0; k < m_count; ++k)
          for (int d = 0; d < hmm.obs_dim; ++d) g.means(k, d) = in.next();
        for (Eigen::Index k = 0; k < m_count; ++k)
          for (int d = 0; d < hmm.obs_dim; ++d) g.vars(k, d) = in.next();
        hmm.emissions.push_back(std::move(g));
      }
      sm.models.push_back(std::move(hmm));
    }
    if (!in.done()) throw FormatError("trailing payload");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return sm;
}

}  // namespace bioctx
