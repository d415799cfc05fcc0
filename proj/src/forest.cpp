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

#include "bioctx/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "bioctx/error.hpp"
#include "bioctx/rng.hpp"
#include "bioctx/serialize.hpp"

namespace bioctx {
namespace {

constexpr double kGainTol = 1e-12;

double entropy(double pos, double neg) {
  const double total = pos + neg;
  if (total <= 0.0 || pos <= 0.0 || neg <= 0.0) return 0.0;
  const double p = pos / total;
  return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

struct ClassStats {
  Eigen::VectorXd pos;
  Eigen::VectorXd neg;

  explicit ClassStats(Eigen::Index c) : pos(Eigen::VectorXd::Zero(c)), neg(Eigen::VectorXd::Zero(c)) {}

  double impurity() const {
    double total = 0.0;
    for (Eigen::Index c = 0; c < pos.size(); ++c)
      total += (pos(c) + neg(c)) * entropy(pos(c), neg(c));
    return total;
  }
  bool pure() const {
    for (Eigen::Index c = 0; c < pos.size(); ++c)
      if (pos(c) > 0.0 && neg(c) > 0.0) return false;
    return true;
  }
};

struct TreeBuilder {
  const Eigen::MatrixXd& x;
  const Eigen::MatrixXd& y;
  const Eigen::VectorXd& wpos;
  const Eigen::VectorXd& wneg;
  const ForestOptions& opts;
  int max_features;
  Rng rng;

  // Per-row contribution to class stats, scaled by multiplicity.
  void add_row(ClassStats& s, Eigen::Index row, double mult) const {
    for (Eigen::Index c = 0; c < y.rows(); ++c) {
      if (y(c, row) > 0.5)
        s.pos(c) += mult * wpos(c);
      else
        s.neg(c) += mult * wneg(c);
    }
  }

  struct Split {
    bool found = false;
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
  };

  // Best threshold for one feature; returns false if the feature is constant.
  bool scan_feature(int f, const std::vector<Eigen::Index>& rows,
                    const std::vector<double>& mult, const ClassStats& parent,
                    double parent_impurity, Split& best) const {
    std::vector<std::size_t> order(rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double va = x(rows[a], f), vb = x(rows[b], f);
      return va < vb || (va == vb && rows[a] < rows[b]);
    });
    if (x(rows[order.front()], f) == x(rows[order.back()], f)) return false;

    ClassStats left(y.rows());
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const Eigen::Index r = rows[order[i]];
      add_row(left, r, mult[order[i]]);
      const double v = x(r, f);
      const double next = x(rows[order[i + 1]], f);
      if (v == next) continue;
      ClassStats right(y.rows());
      right.pos = parent.pos - left.pos;
      right.neg = parent.neg - left.neg;
      const double gain = parent_impurity - left.impurity() - right.impurity();
      double threshold = 0.5 * (v + next);
      if (threshold >= next) threshold = v;
      const bool better =
          !best.found || gain > best.gain + kGainTol ||
          (std::abs(gain - best.gain) <= kGainTol &&
           (f < best.feature || (f == best.feature && threshold < best.threshold)));
      if (better) {
        best.found = true;
        best.gain = gain;
        best.feature = f;
        best.threshold = threshold;
      }
    }
    return true;
  }

  DecisionTree build(const std::vector<double>& row_mult) {
    DecisionTree tree;
    std::vector<Eigen::VectorXd> leaves;
    struct Pending {
      std::vector<Eigen::Index> rows;
      std::vector<double> mult;
      int node;
    };
    std::vector<Pending> stack;
    Pending root;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double m = row_mult[static_cast<std::size_t>(r)];
      if (m > 0.0) {
        root.rows.push_back(r);
        root.mult.push_back(m);
      }
    }
    root.node = 0;
    tree.nodes.emplace_back();
    leaves.emplace_back(Eigen::VectorXd::Zero(y.rows()));
    stack.push_back(std::move(root));

    const int n_features = static_cast<int>(x.cols());
    std::vector<int> perm(static_cast<std::size_t>(n_features));

    while (!stack.empty()) {
      Pending cur = std::move(stack.back());
      stack.pop_back();
      ClassStats stats(y.rows());
      double count = 0.0;
      for (std::size_t i = 0; i < cur.rows.size(); ++i) {
        add_row(stats, cur.rows[i], cur.mult[i]);
        count += cur.mult[i];
      }
      Eigen::VectorXd frac(y.rows());
      for (Eigen::Index c = 0; c < y.rows(); ++c) {
        const double w = stats.pos(c) + stats.neg(c);
        frac(c) = w > 0.0 ? stats.pos(c) / w : 0.0;
      }
      leaves[static_cast<std::size_t>(cur.node)] = frac;
      if (count < opts.min_samples_split || cur.rows.size() < 2 || stats.pure())
        continue;

      const double parent_impurity = stats.impurity();
      std::iota(perm.begin(), perm.end(), 0);
      Split best;
      int scanned = 0;
      for (int i = 0; i < n_features; ++i) {
        // Lazy Fisher-Yates draw without replacement.
        const auto j = static_cast<std::size_t>(i) +
                       uniform_index(rng, static_cast<std::size_t>(n_features - i));
        std::swap(perm[static_cast<std::size_t>(i)], perm[j]);
        if (scan_feature(perm[static_cast<std::size_t>(i)], cur.rows, cur.mult, stats,
                         parent_impurity, best))
          ++scanned;
        if (scanned >= max_features) break;
      }
      if (!best.found || best.gain <= kGainTol) continue;

      Pending left, right;
      for (std::size_t i = 0; i < cur.rows.size(); ++i) {
        Pending& side = x(cur.rows[i], best.feature) <= best.threshold ? left : right;
        side.rows.push_back(cur.rows[i]);
        side.mult.push_back(cur.mult[i]);
      }
      TreeNode& node = tree.nodes[static_cast<std::size_t>(cur.node)];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.left = static_cast<int>(tree.nodes.size());
      node.right = node.left + 1;
      left.node = node.left;
      right.node = node.right;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      leaves.emplace_back(Eigen::VectorXd::Zero(y.rows()));
      leaves.emplace_back(Eigen::VectorXd::Zero(y.rows()));
      stack.push_back(std::move(right));
      stack.push_back(std::move(left));
    }

    tree.leaf_values.resize(y.rows(), static_cast<Eigen::Index>(tree.nodes.size()));
    for (std::size_t i = 0; i < leaves.size(); ++i)
      tree.leaf_values.col(static_cast<Eigen::Index>(i)) = leaves[i];
    return tree;
  }
};

template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (int i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : workers) t.join();
}

}  // namespace

int DecisionTree::leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  int node = 0;
  while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& n = nodes[static_cast<std::size_t>(node)];
    node = row(n.feature) <= n.threshold ? n.left : n.right;
  }
  return node;
}

ForestFit train_forest(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                       const ForestOptions& opts) {
  if (x.rows() != y.cols())
    throw ArgumentError(fmt::format("train_forest: {} feature rows vs {} label columns",
                                    x.rows(), y.cols()));
  if (x.rows() == 0 || x.cols() == 0) throw DataError("train_forest: empty training set");
  if (opts.n_trees < 1) throw ArgumentError("train_forest: n_trees < 1");
  const Eigen::Index n = x.rows();
  const Eigen::Index classes = y.rows();

  ForestFit fit;
  ForestModel& model = fit.model;
  model.n_classes = static_cast<int>(classes);
  model.n_features = static_cast<int>(x.cols());
  model.seed = opts.seed;
  model.positive_weights = Eigen::VectorXd::Ones(classes);
  model.negative_weights = Eigen::VectorXd::Ones(classes);
  if (opts.weighting == ClassWeighting::kBalanced) {
    for (Eigen::Index c = 0; c < classes; ++c) {
      const double pos = (y.row(c).array() > 0.5).count();
      const double neg = static_cast<double>(n) - pos;
      model.positive_weights(c) = pos > 0 ? static_cast<double>(n) / (2.0 * pos) : 0.0;
      model.negative_weights(c) = neg > 0 ? static_cast<double>(n) / (2.0 * neg) : 0.0;
    }
  }
  const int max_features =
      opts.max_features > 0
          ? std::min(opts.max_features, model.n_features)
          : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(x.cols())))));

  model.trees.resize(static_cast<std::size_t>(opts.n_trees));
  std::vector<std::vector<double>> multiplicity(static_cast<std::size_t>(opts.n_trees));
  parallel_for(opts.n_trees, opts.jobs, [&](int t) {
    TreeBuilder builder{x, y, model.positive_weights, model.negative_weights, opts,
                        max_features, Rng(derive_seed(opts.seed, static_cast<std::uint64_t>(t)))};
    std::vector<double> mult(static_cast<std::size_t>(n), opts.bootstrap ? 0.0 : 1.0);
    if (opts.bootstrap)
      for (Eigen::Index i = 0; i < n; ++i)
        mult[uniform_index(builder.rng, static_cast<std::size_t>(n))] += 1.0;
    model.trees[static_cast<std::size_t>(t)] = builder.build(mult);
    multiplicity[static_cast<std::size_t>(t)] = std::move(mult);
  });

  fit.oob_scores = Eigen::MatrixXd::Zero(classes, n);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(n);
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    const DecisionTree& tree = model.trees[t];
    for (Eigen::Index i = 0; i < n; ++i) {
      if (multiplicity[t][static_cast<std::size_t>(i)] > 0.0) continue;
      fit.oob_scores.col(i) += tree.leaf_values.col(tree.leaf_for(x.row(i)));
      counts(i) += 1.0;
    }
  }
  const Eigen::MatrixXd full = predict_proba(model, x);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (counts(i) > 0.0)
      fit.oob_scores.col(i) /= counts(i);
    else
      fit.oob_scores.col(i) = full.col(i);
  }
  return fit;
}

ForestFit train_forest(const SegmentFeatures& x, const ActivationRoll& y,
                       const ForestOptions& opts) {
  if (x.vectors.rows() != y.n_steps())
    throw ArgumentError("train_forest: feature rows do not match label steps");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index t = 0; t < y.n_steps(); ++t)
    if (!y.masked(t)) keep.push_back(t);
  Eigen::MatrixXd xs(static_cast<Eigen::Index>(keep.size()), x.vectors.cols());
  Eigen::MatrixXd ys(y.n_classes(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    xs.row(static_cast<Eigen::Index>(i)) = x.vectors.row(keep[i]);
    ys.col(static_cast<Eigen::Index>(i)) = y.values.col(keep[i]);
  }
  return train_forest(xs, ys, opts);
}

Eigen::MatrixXd predict_proba(const ForestModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.n_features)
    throw ArgumentError(fmt::format("predict_proba: {} features, model expects {}",
                                    x.cols(), model.n_features));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(model.n_classes, x.rows());
  if (model.trees.empty()) return out;
  for (const DecisionTree& tree : model.trees)
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      out.col(i) += tree.leaf_values.col(tree.leaf_for(x.row(i)));
  out /= static_cast<double>(model.trees.size());
  return out;
}

ActivationRoll predict_proba(const ForestModel& model, const SegmentFeatures& x,
                             const std::vector<std::string>& classes) {
  if (static_cast<int>(classes.size()) != model.n_classes)
    throw ArgumentError("predict_proba: class list does not match model");
  ActivationRoll roll(classes, x.segment_step, x.vectors.rows());
  roll.values = predict_proba(model, x.vectors);
  return roll;
}

namespace {

nlohmann::json forest_header(const ForestModel& model) {
  std::vector<std::size_t> sizes;
  for (const auto& t : model.trees) sizes.push_back(t.nodes.size());
  return {{"n_classes", model.n_classes},
          {"n_features", model.n_features},
          {"n_trees", model.trees.size()},
          {"seed", model.seed},
          {"positive_weights", std::vector<double>(model.positive_weights.data(),
                                                   model.positive_weights.data() +
                                                       model.positive_weights.size())},
          {"negative_weights", std::vector<double>(model.negative_weights.data(),
                                                   model.negative_weights.data() +
                                                       model.negative_weights.size())},
          {"tree_sizes", sizes},
          {"layout", "per tree, per node: feature, threshold, left, right, leaf[n_classes]"}};
}

std::vector<double> forest_payload(const ForestModel& model) {
  std::vector<double> payload;
  for (const auto& tree : model.trees) {
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const TreeNode& node = tree.nodes[i];
      payload.push_back(node.feature);
      payload.push_back(node.threshold);
      payload.push_back(node.left);
      payload.push_back(node.right);
      for (Eigen::Index c = 0; c < tree.leaf_values.rows(); ++c)
        payload.push_back(tree.leaf_values(c, static_cast<Eigen::Index>(i)));
    }
  }
  return payload;
}

}  // namespace

std::string encode_forest(const ForestModel& model) {
  return encode_blob("BCTXFOR1", forest_header(model), forest_payload(model));
}

std::uint64_t model_hash(const ForestModel& model) { return fnv1a(encode_forest(model)); }

void save_forest(const std::filesystem::path& path, const ForestModel& model) {
  write_blob(path, "BCTXFOR1", forest_header(model), forest_payload(model));
}

ForestModel load_forest(const std::filesystem::path& path) {
  const Blob blob = read_blob(path, "BCTXFOR1");
  ForestModel model;
  try {
    const auto& h = blob.header;
    model.n_classes = h.at("n_classes").get<int>();
    model.n_features = h.at("n_features").get<int>();
    model.seed = h.at("seed").get<std::uint64_t>();
    const auto pw = h.at("positive_weights").get<std::vector<double>>();
    const auto nw = h.at("negative_weights").get<std::vector<double>>();
    if (static_cast<int>(pw.size()) != model.n_classes ||
        static_cast<int>(nw.size()) != model.n_classes)
      throw FormatError("class weight length mismatch");
    model.positive_weights = Eigen::Map<const Eigen::VectorXd>(pw.data(), model.n_classes);
    model.negative_weights = Eigen::Map<const Eigen::VectorXd>(nw.data(), model.n_classes);
    PayloadReader in(blob.payload);
    for (auto size : h.at("tree_sizes").get<std::vector<std::size_t>>()) {
      DecisionTree tree;
      tree.nodes.resize(size);
      tree.leaf_values.resize(model.n_classes, static_cast<Eigen::Index>(size));
      for (std::size_t i = 0; i < size; ++i) {
        TreeNode& node = tree.nodes[i];
        node.feature = static_cast<int>(in.next());
        node.threshold = in.next();
        node.left = static_cast<int>(in.next());
        node.right = static_cast<int>(in.next());
        if (node.feature >= model.n_features ||
            (node.feature >= 0 &&
             (node.left <= 0 || node.right <= 0 ||
              static_cast<std::size_t>(std::max(node.left, node.right)) >= size)))
          throw FormatError("invalid tree node");
        for (int c = 0; c < model.n_classes; ++c)
          tree.leaf_values(c, static_cast<Eigen::Index>(i)) = in.next();
      }
      model.trees.push_back(std::move(tree));
    }
    if (!in.done()) throw FormatError("trailing payload");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace bioctx
