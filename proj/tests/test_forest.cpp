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

#include <doctest.h>

#include <random>

#include "bioctx/error.hpp"
#include "bioctx/forest.hpp"
#include "bioctx/metrics.hpp"
#include "support.hpp"

using namespace bioctx;

namespace {

struct Task {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
};

// Class c is on when feature c is positive; the other features are noise.
Task separable(Eigen::Index rows, Eigen::Index classes, Eigen::Index features, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Task t;
  t.x = Eigen::MatrixXd::NullaryExpr(rows, features, [&] { return n(g); });
  t.y.resize(classes, rows);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < classes; ++c) t.y(c, r) = t.x(r, c) > 0.0 ? 1.0 : 0.0;
  return t;
}

DecisionTree stump(int feature, double threshold, double left_frac, double right_frac) {
  DecisionTree t;
  t.nodes = {{feature, threshold, 1, 2}, {}, {}};
  t.leaf_values.resize(1, 3);
  t.leaf_values << 0.0, left_frac, right_frac;
  return t;
}

}  // namespace

TEST_CASE("separable task is learned") {
  const Task t = separable(400, 3, 8, 1);
  ForestOptions opts;
  opts.n_trees = 30;
  opts.seed = 5;
  const ForestFit fit = train_forest(t.x, t.y, opts);
  const Eigen::MatrixXd p = predict_proba(fit.model, t.x);
  const Eigen::MatrixXd decided = (p.array() >= 0.5).cast<double>();
  const FScore f = micro_f(decided, t.y, std::vector<std::uint8_t>(400, 0));
  CHECK(f.f >= 0.95);
  CHECK(p.minCoeff() >= 0.0);
  CHECK(p.maxCoeff() <= 1.0);

  // Held-out rows from the same rule.
  const Task test = separable(400, 3, 8, 2);
  const Eigen::MatrixXd q = (predict_proba(fit.model, test.x).array() >= 0.5).cast<double>();
  CHECK(micro_f(q, test.y, std::vector<std::uint8_t>(400, 0)).f >= 0.9);

  CHECK(fit.oob_scores.cols() == 400);
  CHECK(fit.oob_scores.minCoeff() >= 0.0);
  CHECK(fit.oob_scores.maxCoeff() <= 1.0);
}

TEST_CASE("all-positive class predicts 1 everywhere") {
  const Task t = separable(50, 1, 4, 3);
  Eigen::MatrixXd y = Eigen::MatrixXd::Ones(1, 50);
  ForestOptions opts;
  opts.n_trees = 5;
  const ForestFit fit = train_forest(t.x, y, opts);
  const Task other = separable(20, 1, 4, 4);
  CHECK(predict_proba(fit.model, other.x).minCoeff() == 1.0);
}

TEST_CASE("hand-built forests") {
  ForestModel one;
  one.n_classes = 1;
  one.n_features = 2;
  one.trees = {stump(1, 0.0, 0.2, 0.7)};
  Eigen::MatrixXd x(2, 2);
  x << 5.0, -1.0,
       5.0, 1.0;
  Eigen::MatrixXd p = predict_proba(one, x);
  CHECK(p(0, 0) == 0.2);
  CHECK(p(0, 1) == 0.7);

  ForestModel two = one;
  two.trees = {stump(0, 10.0, 0.2, 0.9), stump(0, 10.0, 0.6, 0.1)};
  p = predict_proba(two, x);
  CHECK(p(0, 0) == doctest::Approx(0.4).epsilon(1e-15));

  CHECK_THROWS_AS(predict_proba(two, Eigen::MatrixXd::Zero(2, 3)), ArgumentError);
}

TEST_CASE("determinism across runs and worker counts") {
  const Task t = separable(150, 2, 6, 7);
  ForestOptions opts;
  opts.n_trees = 12;
  opts.seed = 9;
  const auto h1 = model_hash(train_forest(t.x, t.y, opts).model);
  const auto h2 = model_hash(train_forest(t.x, t.y, opts).model);
  opts.jobs = 3;
  const auto h3 = model_hash(train_forest(t.x, t.y, opts).model);
  CHECK(h1 == h2);
  CHECK(h1 == h3);
  opts.seed = 10;
  CHECK(model_hash(train_forest(t.x, t.y, opts).model) != h1);
}

TEST_CASE("duplicated rows change nothing without bootstrap") {
  const Task t = separable(60, 2, 5, 11);
  ForestOptions opts;
  opts.n_trees = 4;
  opts.bootstrap = false;
  opts.seed = 2;
  Eigen::MatrixXd x2(120, 5), y2(2, 120);
  x2 << t.x, t.x;
  y2 << t.y, t.y;
  const ForestModel a = train_forest(t.x, t.y, opts).model;
  const ForestModel b = train_forest(x2, y2, opts).model;
  const Task probe = separable(200, 2, 5, 12);
  CHECK(predict_proba(a, probe.x) == predict_proba(b, probe.x));
}

TEST_CASE("prediction is row-wise") {
  const Task t = separable(80, 2, 4, 13);
  ForestOptions opts;
  opts.n_trees = 6;
  const ForestModel m = train_forest(t.x, t.y, opts).model;
  const Eigen::MatrixXd p = predict_proba(m, t.x);
  const Eigen::MatrixXd rev = t.x.colwise().reverse();
  const Eigen::MatrixXd q = predict_proba(m, rev);
  CHECK(q == p.rowwise().reverse());
}

TEST_CASE("balanced equals unbalanced at 50% prevalence") {
  Task t = separable(64, 2, 4, 17);
  for (Eigen::Index r = 0; r < 64; ++r) {
    t.y(0, r) = r % 2;
    t.y(1, r) = (r / 2) % 2;
  }
  ForestOptions opts;
  opts.n_trees = 5;
  const ForestModel u = train_forest(t.x, t.y, opts).model;
  opts.weighting = ClassWeighting::kBalanced;
  const ForestModel b = train_forest(t.x, t.y, opts).model;
  CHECK(b.positive_weights == Eigen::VectorXd::Ones(2));
  CHECK(predict_proba(u, t.x) == predict_proba(b, t.x));
}

TEST_CASE("balanced weights and leaf fractions") {
  // One feature, no bootstrap: a single stump separates the rows, so each
  // leaf is pure and unaffected by weights; the root fraction is weighted.
  Eigen::MatrixXd x(8, 1);
  x << 0, 1, 2, 3, 4, 5, 6, 7;
  Eigen::MatrixXd y(1, 8);
  y << 0, 0, 0, 0, 0, 0, 1, 1;
  ForestOptions opts;
  opts.n_trees = 1;
  opts.bootstrap = false;
  opts.weighting = ClassWeighting::kBalanced;
  const ForestModel m = train_forest(x, y, opts).model;
  CHECK(m.positive_weights(0) == doctest::Approx(8.0 / 4.0));
  CHECK(m.negative_weights(0) == doctest::Approx(8.0 / 12.0));
  CHECK(m.trees[0].leaf_values(0, 0) == doctest::Approx(0.5));
  CHECK(m.trees[0].nodes[0].threshold == doctest::Approx(5.5));
}

TEST_CASE("masked segments are dropped") {
  const Task t = separable(40, 1, 3, 19);
  SegmentFeatures f;
  f.vectors = t.x;
  ActivationRoll y({"A"}, 5.0, 40);
  y.values = t.y;
  // Masked rows carry inverted labels; they must not matter.
  for (Eigen::Index r = 0; r < 40; r += 3) {
    y.na_mask[static_cast<std::size_t>(r)] = 1;
    y.values(0, r) = 1.0 - y.values(0, r);
  }
  ForestOptions opts;
  opts.n_trees = 3;
  opts.bootstrap = false;
  const ForestModel m = train_forest(f, y, opts).model;
  Eigen::MatrixXd kept_x(0, 3), kept_y(1, 0);
  for (Eigen::Index r = 0; r < 40; ++r) {
    if (r % 3 == 0) continue;
    kept_x.conservativeResize(kept_x.rows() + 1, 3);
    kept_x.row(kept_x.rows() - 1) = t.x.row(r);
    kept_y.conservativeResize(1, kept_y.cols() + 1);
    kept_y(0, kept_y.cols() - 1) = t.y(0, r);
  }
  CHECK(model_hash(m) == model_hash(train_forest(kept_x, kept_y, opts).model));
}

TEST_CASE("forest file round trip") {
  const Task t = separable(60, 2, 4, 23);
  ForestOptions opts;
  opts.n_trees = 4;
  const ForestModel m = train_forest(t.x, t.y, opts).model;
  testing::TempDir dir("forest");
  save_forest(dir / "f.bin", m);
  const ForestModel r = load_forest(dir / "f.bin");
  CHECK(model_hash(r) == model_hash(m));
  CHECK(predict_proba(r, t.x) == predict_proba(m, t.x));
}
