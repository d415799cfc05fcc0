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
#include <set>

#include "bioctx/cluster.hpp"
#include "bioctx/diag.hpp"
#include "bioctx/error.hpp"
#include "bioctx/gmm.hpp"
#include "bioctx/hmm.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bioctx;

namespace {

struct RandomModel {
  Eigen::MatrixXd trans;
  Eigen::VectorXd init;
  Eigen::MatrixXd emis;  // linear likelihoods, S x T
};

RandomModel random_model(int states, int steps, std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  RandomModel m;
  m.trans = Eigen::MatrixXd::NullaryExpr(states, states, [&] { return u(g); });
  for (int i = 0; i < states; ++i) m.trans.row(i) /= m.trans.row(i).sum();
  m.init = Eigen::VectorXd::NullaryExpr(states, [&] { return u(g); });
  m.init /= m.init.sum();
  m.emis = Eigen::MatrixXd::NullaryExpr(states, steps, [&] { return u(g); });
  return m;
}

Gmm unit_gaussian(double mean, double var) {
  Gmm g;
  g.weights = Eigen::VectorXd::Ones(1);
  g.means = Eigen::MatrixXd::Constant(1, 1, mean);
  g.vars = Eigen::MatrixXd::Constant(1, 1, var);
  return g;
}

}  // namespace

TEST_CASE("viterbi and filtering against path enumeration") {
  std::mt19937_64 g(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int S = 1 + trial % 4, T = 1 + (trial / 4) % 6;
    const RandomModel m = random_model(S, T, g);
    const Eigen::MatrixXd loge = m.emis.array().log();
    const std::vector<int> path = viterbi_path(m.trans, m.init, loge);
    REQUIRE(path.size() == static_cast<std::size_t>(T));
    CHECK(path_log_probability(m.trans, m.init, loge, path) ==
          doctest::Approx(oracle::best_path_log_probability(m.trans, m.init, m.emis)).epsilon(1e-12));
    const Eigen::MatrixXd post = forward_filter(m.trans, m.init, loge);
    const Eigen::MatrixXd expect = oracle::filtered_posteriors(m.trans, m.init, m.emis);
    CHECK((post - expect).cwiseAbs().maxCoeff() <= 1e-8);
    for (int t = 0; t < T; ++t) CHECK(std::abs(post.col(t).sum() - 1.0) <= 1e-12);

    // Scaling all likelihoods at one step leaves the path unchanged.
    Eigen::MatrixXd shifted = loge;
    shifted.col(T / 2).array() += 3.7;
    CHECK(viterbi_path(m.trans, m.init, shifted) == path);
  }
}

TEST_CASE("viterbi special cases") {
  Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  const std::vector<int> p = viterbi_path(one, Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Zero(1, 5));
  CHECK(p == std::vector<int>(5, 0));
  CHECK(viterbi_path(one, Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Zero(1, 0)).empty());

  // A near-permutation chain overrides weak emission preferences.
  Eigen::MatrixXd cyc = Eigen::MatrixXd::Constant(3, 3, 1e-6);
  cyc(0, 1) = cyc(1, 2) = cyc(2, 0) = 1.0 - 2e-6;
  Eigen::VectorXd init(3);
  init << 1.0 - 2e-6, 1e-6, 1e-6;
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> noise(-0.1, 0.1);
  const Eigen::MatrixXd loge = Eigen::MatrixXd::NullaryExpr(3, 9, [&] { return noise(g); });
  const std::vector<int> chain = viterbi_path(cyc, init, loge);
  for (int t = 0; t < 9; ++t) CHECK(chain[static_cast<std::size_t>(t)] == t % 3);

  // Ties go to the lower index.
  const Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(2, 2, 0.5);
  CHECK(viterbi_path(flat, Eigen::VectorXd::Constant(2, 0.5), Eigen::MatrixXd::Zero(2, 4)) ==
        std::vector<int>(4, 0));
}

TEST_CASE("uniform emissions give Markov-chain marginals") {
  Eigen::MatrixXd a(2, 2);
  a << 0.9, 0.1,
       0.3, 0.7;
  Eigen::VectorXd pi(2);
  pi << 0.2, 0.8;
  const Eigen::MatrixXd post = forward_filter(a, pi, Eigen::MatrixXd::Zero(2, 6));
  Eigen::RowVectorXd p = pi.transpose();
  for (int t = 0; t < 6; ++t) {
    CHECK((post.col(t).transpose() - p).cwiseAbs().maxCoeff() < 1e-14);
    p = p * a;
  }
}

TEST_CASE("zero likelihood step yields a uniform column") {
  Eigen::MatrixXd loge = Eigen::MatrixXd::Zero(2, 3);
  loge.col(1).setConstant(-std::numeric_limits<double>::infinity());
  WarningCollector wc;
  const Eigen::MatrixXd post =
      forward_filter(Eigen::MatrixXd::Constant(2, 2, 0.5), Eigen::VectorXd::Constant(2, 0.5), loge);
  CHECK(wc.messages().size() == 1);
  CHECK(post(0, 1) == 0.5);
}

TEST_CASE("train_hmm: counts, smoothing and state sets") {
  // Alternating A,B: self transitions (0 + 1)/(n_from + 2).
  const int n = 40;
  ActivationRoll truth({"A", "B"}, 5.0, n), obs({"A", "B"}, 5.0, n);
  for (int t = 0; t < n; ++t) {
    truth.values(t % 2, t) = 1.0;
    obs.values(t % 2, t) = 0.8 + 0.01 * (t % 5);
    obs.values(1 - t % 2, t) = 0.1 + 0.01 * (t % 3);
  }
  HmmTrainOptions opts;
  opts.max_components = 2;
  WarningCollector wc;
  const HmmSmoother joint = train_hmm({obs}, {truth}, HmmKind::kJoint, opts);
  REQUIRE(joint.models.size() == 1);
  const Hmm& h = joint.models[0];
  CHECK(h.states == std::vector<std::uint64_t>{1, 2});
  // 20 departures from state {A}, 19 from {B}.
  CHECK(h.trans(0, 0) == doctest::Approx(1.0 / 22.0));
  CHECK(h.trans(1, 1) == doctest::Approx(1.0 / 21.0));
  CHECK(h.initial(0) == doctest::Approx(2.0 / 3.0));
  for (Eigen::Index i = 0; i < 2; ++i) CHECK(std::abs(h.trans.row(i).sum() - 1.0) < 1e-12);
  CHECK((h.trans.array() > 0.0).all());

  const HmmSmoother per = train_hmm({obs}, {truth}, HmmKind::kPerClass, opts);
  CHECK(per.models.size() == 2);
  for (const auto& m : per.models) CHECK(m.n_states() == 2);

  // One observed combination.
  ActivationRoll constant({"A", "B"}, 5.0, 10);
  constant.values.row(0).setOnes();
  ActivationRoll head({"A", "B"}, 5.0, 10);
  head.values = obs.values.leftCols(10);
  const HmmSmoother single = train_hmm({head}, {constant}, HmmKind::kJoint, opts);
  CHECK(single.models[0].n_states() == 1);
  CHECK(single.models[0].trans(0, 0) == 1.0);
}

TEST_CASE("masked steps split sequences") {
  ActivationRoll truth({"A"}, 5.0, 7), obs({"A"}, 5.0, 7);
  // on on | off off (masked between)
  truth.values << 1, 1, 0, 0, 0, 0, 0;
  obs.values << 0.9, 0.8, 0.5, 0.1, 0.2, 0.1, 0.2;
  truth.na_mask[2] = 1;
  HmmTrainOptions opts;
  opts.max_components = 1;
  const HmmSmoother sm = train_hmm({obs}, {truth}, HmmKind::kPerClass, opts);
  const Hmm& h = sm.models[0];
  // Transitions: off->off x3, on->on x1; no on->off across the gap.
  CHECK(h.trans(1, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(h.trans(0, 0) == doctest::Approx(4.0 / 5.0));
  CHECK(h.initial(0) == doctest::Approx(0.5));
}

TEST_CASE("smooth") {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> u(0.0, 0.15);
  const int n = 200;
  ActivationRoll truth({"A", "B", "C"}, 5.0, n), obs({"A", "B", "C"}, 5.0, n);
  for (int t = 0; t < n; ++t) {
    const int phase = (t / 10) % 3;
    truth.values(phase, t) = 1.0;
    if (phase == 2) truth.values(0, t) = 1.0;
    for (int c = 0; c < 3; ++c) obs.values(c, t) = truth.values(c, t) > 0 ? 0.85 + u(g) : u(g);
  }
  HmmTrainOptions opts;
  opts.max_components = 2;
  for (HmmKind kind : {HmmKind::kJoint, HmmKind::kPerClass}) {
    const HmmSmoother sm = train_hmm({obs}, {truth}, kind, opts);
    ActivationRoll test = obs;
    test.na_mask[50] = 1;
    const ActivationRoll v = smooth(test, sm, DecodeMode::kViterbi);
    const ActivationRoll f = smooth(test, sm, DecodeMode::kFilter);
    CHECK(v.values.col(50).sum() == 0.0);
    CHECK(f.values.col(50).sum() == 0.0);
    CHECK(v.na_mask == test.na_mask);
    CHECK(((v.values.array() == 0.0) || (v.values.array() == 1.0)).all());
    CHECK(f.values.minCoeff() >= 0.0);
    CHECK(f.values.maxCoeff() <= 1.0 + 1e-12);
    int agree = 0;
    for (int t = 0; t < n; ++t)
      if (t != 50) agree += (v.values.col(t) == truth.values.col(t)) ? 1 : 0;
    CHECK(agree >= n - 5);
    if (kind == HmmKind::kJoint) {
      std::set<std::uint64_t> seen(sm.models[0].states.begin(), sm.models[0].states.end());
      for (int t = 0; t < n; ++t) {
        std::uint64_t bits = 0;
        for (int c = 0; c < 3; ++c)
          if (v.values(c, t) > 0.5) bits |= 1u << c;
        if (t != 50) CHECK(seen.count(bits) == 1);
      }
    }
  }
  CHECK_THROWS_AS(smooth(ActivationRoll({"A"}, 5.0, 3), train_hmm({obs}, {truth}, HmmKind::kJoint, opts),
                         DecodeMode::kFilter),
                  ArgumentError);
}

TEST_CASE("per-class filter on a steadily active class approaches 1") {
  ActivationRoll truth({"A"}, 5.0, 60), obs({"A"}, 5.0, 60);
  for (int t = 0; t < 60; ++t) {
    truth.values(0, t) = (t / 15) % 2;
    obs.values(0, t) = truth.values(0, t) > 0 ? 0.9 + 0.001 * (t % 7) : 0.1 + 0.001 * (t % 5);
  }
  HmmTrainOptions opts;
  opts.max_components = 1;
  const HmmSmoother sm = train_hmm({obs}, {truth}, HmmKind::kPerClass, opts);
  ActivationRoll test({"A"}, 5.0, 10);
  test.values.setConstant(1.0);
  const ActivationRoll f = smooth(test, sm, DecodeMode::kFilter);
  CHECK(f.values.rightCols(5).minCoeff() > 0.99);
}

TEST_CASE("gmm density, EM and BIC") {
  const Gmm g = unit_gaussian(1.0, 4.0);
  CHECK(g.log_pdf(Eigen::VectorXd::Constant(1, 3.0)) ==
        doctest::Approx(-0.5 * std::log(2 * M_PI * 4.0) - 0.5 * 4.0 / 4.0).epsilon(1e-14));

  Gmm mix;
  mix.weights = Eigen::Vector2d(0.3, 0.7);
  mix.means = Eigen::MatrixXd(2, 2);
  mix.means << 0, 0,
               3, -1;
  mix.vars = Eigen::MatrixXd(2, 2);
  mix.vars << 1, 2,
              0.5, 0.25;
  const Eigen::Vector2d x(0.4, -0.2);
  auto normal = [](double v, double m, double s2) {
    return std::exp(-0.5 * (v - m) * (v - m) / s2) / std::sqrt(2 * M_PI * s2);
  };
  const double expect = 0.3 * normal(0.4, 0, 1) * normal(-0.2, 0, 2) +
                        0.7 * normal(0.4, 3, 0.5) * normal(-0.2, -1, 0.25);
  CHECK(mix.log_pdf(x) == doctest::Approx(std::log(expect)).epsilon(1e-13));

  std::mt19937_64 r(5);
  std::normal_distribution<double> a(-4.0, 0.5), b(4.0, 1.0);
  Eigen::MatrixXd data(1, 600);
  for (int j = 0; j < 600; ++j) data(0, j) = j % 3 == 0 ? a(r) : b(r);
  const Gmm one = fit_gmm(data, 1, 1, {});
  CHECK(one.means(0, 0) == doctest::Approx(data.mean()).epsilon(1e-12));
  const Gmm best = select_gmm_bic(data, 4, 7, {});
  CHECK(best.n_components() == 2);
  CHECK(std::abs(best.weights.sum() - 1.0) < 1e-9);
  CHECK((best.vars.array() >= 1e-6).all());
  const double lo = std::min(best.means(0, 0), best.means(1, 0));
  CHECK(lo == doctest::Approx(-4.0).epsilon(0.05));
  CHECK(gmm_bic(best, data) < gmm_bic(one, data));

  // EM never decreases the likelihood.
  Gmm cur = fit_gmm(data, 3, 2, {1, 1e-6});
  double prev = cur.log_likelihood(data);
  for (int i = 0; i < 10; ++i) {
    cur = fit_gmm_em(data, cur, {1, 1e-6});
    const double ll = cur.log_likelihood(data);
    CHECK(ll >= prev - 1e-9);
    prev = ll;
  }
}

TEST_CASE("kmeans recovers planted clusters") {
  std::mt19937_64 g(6);
  std::normal_distribution<double> n(0.0, 0.05);
  Eigen::MatrixXd pts(2, 90);
  const double cx[3] = {0, 5, 0}, cy[3] = {0, 0, 5};
  for (int j = 0; j < 90; ++j) {
    pts(0, j) = cx[j % 3] + n(g);
    pts(1, j) = cy[j % 3] + n(g);
  }
  Rng rng(1);
  const KMeansResult km = kmeans(pts, 3, 100, rng);
  for (int c = 0; c < 3; ++c) {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    int count = 0;
    for (int j = 0; j < 90; ++j)
      if (km.labels[static_cast<std::size_t>(j)] == km.labels[static_cast<std::size_t>(c)]) {
        mean += pts.col(j);
        ++count;
      }
    CHECK(count == 30);
    CHECK((km.centroids.col(km.labels[static_cast<std::size_t>(c)]) - mean / count).norm() < 1e-12);
  }
  CHECK_THROWS_AS(kmeans(pts, 91, 1, rng), ArgumentError);
}

TEST_CASE("hmm file round trip") {
  ActivationRoll truth({"A", "B"}, 5.0, 30), obs({"A", "B"}, 5.0, 30);
  for (int t = 0; t < 30; ++t) {
    truth.values((t / 5) % 2, t) = 1.0;
    obs.values(0, t) = 0.1 * (t % 7);
    obs.values(1, t) = 0.05 * (t % 11);
  }
  HmmTrainOptions opts;
  opts.max_components = 2;
  const HmmSmoother sm = train_hmm({obs}, {truth}, HmmKind::kJoint, opts);
  testing::TempDir dir("hmm");
  save_hmm(dir / "h.bin", sm);
  const HmmSmoother r = load_hmm(dir / "h.bin");
  CHECK(r.classes == sm.classes);
  CHECK(r.models[0].states == sm.models[0].states);
  CHECK(r.models[0].trans == sm.models[0].trans);
  CHECK(smooth(obs, r, DecodeMode::kFilter).values == smooth(obs, sm, DecodeMode::kFilter).values);
}
