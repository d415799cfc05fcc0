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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "bioctx/error.hpp"
#include "bioctx/metrics.hpp"
#include "bioctx/report.hpp"
#include "bioctx/scheme.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bioctx;

namespace {

ActivationRoll roll_of(const Eigen::MatrixXd& v, double step = 5.0) {
  std::vector<std::string> names;
  for (Eigen::Index c = 0; c < v.rows(); ++c) names.push_back("c" + std::to_string(c));
  ActivationRoll r(names, step, v.cols());
  r.values = v;
  return r;
}

Eigen::MatrixXd random_binary(Eigen::Index c, Eigen::Index t, double p, std::mt19937_64& g) {
  std::bernoulli_distribution b(p);
  Eigen::MatrixXd m(c, t);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = b(g) ? 1.0 : 0.0;
  return m;
}

// Plain counting, separate from the library's bookkeeping.
double oracle_f(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
                const std::vector<std::uint8_t>& mask) {
  double tp = 0, fp = 0, fn = 0;
  for (Eigen::Index c = 0; c < truth.rows(); ++c)
    for (Eigen::Index t = 0; t < truth.cols(); ++t) {
      if (mask[static_cast<std::size_t>(t)]) continue;
      tp += pred(c, t) * truth(c, t);
      fp += pred(c, t) * (1 - truth(c, t));
      fn += (1 - pred(c, t)) * truth(c, t);
    }
  return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

// Every candidate tried by brute force; nearest-rank quantile positions.
double oracle_best_threshold(const std::vector<double>& s, const std::vector<double>& y) {
  std::vector<double> sorted = s;
  std::sort(sorted.begin(), sorted.end());
  std::set<double> cands;
  const std::size_t n = sorted.size();
  for (int i = 0; i < 50; ++i) cands.insert(sorted[(static_cast<std::size_t>(i) * (n - 1)) / 49]);
  double best = -1, thr = 0;
  for (double c : cands) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const bool p = s[k] >= c;
      tp += p && y[k] > 0.5;
      fp += p && y[k] <= 0.5;
      fn += !p && y[k] > 0.5;
    }
    const double f = tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
    if (f > best) {
      best = f;
      thr = c;
    }
  }
  return thr;
}

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p) << s;
}

Manifest manifest_of(int individuals, int per_ind, Condition cond, const std::string& prefix) {
  Manifest m;
  for (int i = 0; i < individuals; ++i)
    for (int r = 0; r < per_ind; ++r) {
      ManifestEntry e;
      e.path = prefix + std::to_string(i) + "_" + std::to_string(r) + ".wav";
      e.audio = e.path;
      e.individual = prefix + std::to_string(i);
      e.condition = cond;
      m.entries.push_back(e);
    }
  return m;
}

void check_disjoint(const Scheme& s) {
  for (const auto& f : s.folds) {
    std::set<std::size_t> train(f.train.begin(), f.train.end());
    for (std::size_t i : f.test) CHECK(train.count(i) == 0);
  }
}

}  // namespace

TEST_CASE("micro F hand cases") {
  Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(1, 5);
  truth(0, 1) = truth(0, 2) = 1;
  Eigen::MatrixXd pred = Eigen::MatrixXd::Zero(1, 5);
  pred(0, 2) = pred(0, 3) = 1;
  const std::vector<std::uint8_t> mask(5, 0);

  const FScore half = micro_f(pred, truth, mask);
  CHECK(half.tp == 1);
  CHECK(half.fp == 1);
  CHECK(half.fn == 1);
  CHECK(half.precision == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half.recall == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half.f == doctest::Approx(0.5).epsilon(1e-15));

  CHECK(micro_f(truth, truth, mask).f == 1.0);

  const FScore none = micro_f(Eigen::MatrixXd::Zero(1, 5), truth, mask);
  CHECK(none.f == 0.0);
  CHECK_FALSE(none.precision_defined);
  CHECK(none.precision == 0.0);
  CHECK(none.recall_defined);

  CHECK_THROWS_AS(micro_f(Eigen::MatrixXd::Zero(2, 5), truth, mask), ArgumentError);
  CHECK_THROWS_AS(micro_f(pred, truth, std::vector<std::uint8_t>(4, 0)), ArgumentError);
}

TEST_CASE("micro F matches counting oracle and ignores order and masked steps") {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index C = 1 + static_cast<Eigen::Index>(g() % 5);
    const Eigen::Index T = 5 + static_cast<Eigen::Index>(g() % 40);
    const Eigen::MatrixXd truth = random_binary(C, T, 0.3, g);
    const Eigen::MatrixXd pred = random_binary(C, T, 0.3, g);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(T));
    for (auto& m : mask) m = g() % 4 == 0;
    const double f = micro_f(pred, truth, mask).f;
    CHECK(f == doctest::Approx(oracle_f(pred, truth, mask)).epsilon(1e-12));

    // permuting classes and steps
    std::vector<Eigen::Index> pc(static_cast<std::size_t>(C)), pt(static_cast<std::size_t>(T));
    std::iota(pc.begin(), pc.end(), 0);
    std::iota(pt.begin(), pt.end(), 0);
    std::shuffle(pc.begin(), pc.end(), g);
    std::shuffle(pt.begin(), pt.end(), g);
    Eigen::MatrixXd p2(C, T), t2(C, T);
    std::vector<std::uint8_t> m2(mask.size());
    for (Eigen::Index c = 0; c < C; ++c)
      for (Eigen::Index t = 0; t < T; ++t) {
        p2(c, t) = pred(pc[static_cast<std::size_t>(c)], pt[static_cast<std::size_t>(t)]);
        t2(c, t) = truth(pc[static_cast<std::size_t>(c)], pt[static_cast<std::size_t>(t)]);
        m2[static_cast<std::size_t>(t)] = mask[static_cast<std::size_t>(pt[static_cast<std::size_t>(t)])];
      }
    CHECK(micro_f(p2, t2, m2).f == f);

    // rewriting masked steps with noise changes nothing
    Eigen::MatrixXd p3 = pred, t3 = truth;
    const Eigen::MatrixXd noise_p = random_binary(C, T, 0.5, g);
    const Eigen::MatrixXd noise_t = random_binary(C, T, 0.5, g);
    for (Eigen::Index t = 0; t < T; ++t)
      if (mask[static_cast<std::size_t>(t)]) {
        p3.col(t) = noise_p.col(t);
        t3.col(t) = noise_t.col(t);
      }
    CHECK(micro_f(p3, t3, mask).f == f);
  }
}

TEST_CASE("AUC matches pairwise oracle") {
  std::mt19937_64 g(5);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + g() % 60;
    std::vector<double> s(n), y(n);
    std::vector<std::uint8_t> mask(n);
    // coarse grid so ties are common
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(g() % 8) / 8.0;
      y[i] = g() % 3 == 0 ? 1.0 : 0.0;
      mask[i] = g() % 5 == 0;
    }
    std::vector<double> ks;
    std::vector<int> ky;
    for (std::size_t i = 0; i < n; ++i)
      if (!mask[i]) {
        ks.push_back(s[i]);
        ky.push_back(y[i] > 0.5);
      }
    const auto expect = oracle::pairwise_auc(ks, ky);
    const auto got = auc(s, y, mask);
    REQUIRE(expect.has_value() == got.has_value());
    if (got) {
      CHECK(*got == doctest::Approx(*expect).epsilon(1e-12));
      ++compared;
    }
  }
  CHECK(compared > 150);
}

TEST_CASE("AUC small cases") {
  const std::vector<std::uint8_t> none;
  CHECK(*auc(std::vector<double>{0.9, 0.1}, std::vector<double>{1, 0}, none) == 1.0);
  CHECK(*auc(std::vector<double>{0.1, 0.9}, std::vector<double>{1, 0}, none) == 0.0);
  CHECK(*auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<double>{1, 0, 1, 0}, none) == 0.5);
  CHECK_FALSE(auc(std::vector<double>{0.3, 0.7}, std::vector<double>{1, 1}, none).has_value());
  CHECK_FALSE(auc(std::vector<double>{0.3, 0.7}, std::vector<double>{0, 0}, none).has_value());
  // the only negative is masked
  const std::vector<std::uint8_t> mask{0, 1};
  CHECK_FALSE(auc(std::vector<double>{0.3, 0.7}, std::vector<double>{1, 0}, mask).has_value());
  CHECK_THROWS_AS(auc(std::vector<double>{0.3}, std::vector<double>{1, 0}, none), ArgumentError);
}

TEST_CASE("AUC invariant under increasing transforms") {
  std::mt19937_64 g(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 30;
    std::vector<double> s(n), y(n), t1(n), t2(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(u(g) * 10) / 10;
      y[i] = i % 3 == 0 ? 1.0 : 0.0;
      t1[i] = std::exp(3 * s[i]);
      t2[i] = std::pow(s[i], 3) - 7;
    }
    const auto base = auc(s, y, {});
    CHECK(*auc(t1, y, {}) == doctest::Approx(*base).epsilon(1e-14));
    CHECK(*auc(t2, y, {}) == doctest::Approx(*base).epsilon(1e-14));
  }
}

TEST_CASE("AUC of binary scores is balanced accuracy") {
  std::mt19937_64 g(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + g() % 50;
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(g() % 2);
      y[i] = static_cast<double>(g() % 2);
    }
    double tp = 0, tn = 0, p = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p += y[i];
      neg += 1 - y[i];
      tp += s[i] * y[i];
      tn += (1 - s[i]) * (1 - y[i]);
    }
    const auto a = auc(s, y, {});
    if (p == 0 || neg == 0) {
      CHECK_FALSE(a.has_value());
      continue;
    }
    CHECK(*a == doctest::Approx((tp / p + tn / neg) / 2).epsilon(1e-12));
  }
}

TEST_CASE("class AUC honours the union of NA masks") {
  Eigen::MatrixXd v(1, 4), y(1, 4);
  v << 0.9, 0.1, 0.95, 0.2;
  y << 1, 0, 0, 0;
  ActivationRoll s = roll_of(v), t = roll_of(y);
  CHECK(*class_auc(s, t, 0) == doctest::Approx(2.0 / 3.0));
  s.na_mask[2] = 1;
  CHECK(*class_auc(s, t, 0) == 1.0);
}

TEST_CASE("quantile candidates") {
  std::vector<double> v(101);
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), std::mt19937_64(1));
  const auto c = quantile_candidates(v);
  REQUIRE(c.size() == 50);
  CHECK(c.front() == 0.0);
  CHECK(c.back() == 100.0);
  CHECK(c[1] == 2.0);  // floor(100/49)
  CHECK(std::is_sorted(c.begin(), c.end()));

  // small inputs keep every distinct value
  CHECK(quantile_candidates({3.0, 1.0, 3.0, 2.0}) == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(quantile_candidates({}).empty());
}

TEST_CASE("thresholds on separable scores give training F of one") {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> lo(0.0, 0.4), hi(0.6, 1.0);
  Eigen::MatrixXd s(2, 40), y = Eigen::MatrixXd::Zero(2, 40);
  for (Eigen::Index t = 0; t < 40; ++t)
    for (Eigen::Index c = 0; c < 2; ++c) {
      const bool on = (t + 3 * c) % 5 == 0;
      y(c, t) = on;
      s(c, t) = on ? hi(g) : lo(g);
    }
  const ActivationRoll scores = roll_of(s), truth = roll_of(y);
  for (auto mode : {ThresholdMode::kPerClass, ThresholdMode::kSingle}) {
    const auto thr = choose_thresholds(scores, truth, mode);
    CHECK(micro_f(apply_thresholds(scores, thr), truth).f == 1.0);
  }
}

TEST_CASE("per-class thresholds match brute force") {
  std::mt19937_64 g(21);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index T = 20 + static_cast<Eigen::Index>(g() % 200);
    Eigen::MatrixXd y = random_binary(3, T, 0.3, g);
    y(0, 0) = y(1, 0) = y(2, 0) = 1;
    Eigen::MatrixXd s(3, T);
    for (Eigen::Index i = 0; i < s.size(); ++i)
      s.data()[i] = std::round((y.data()[i] + n(g)) * 20) / 20;
    const auto thr = choose_thresholds(roll_of(s), roll_of(y), ThresholdMode::kPerClass);
    for (Eigen::Index c = 0; c < 3; ++c) {
      std::vector<double> ss, yy;
      for (Eigen::Index t = 0; t < T; ++t) {
        ss.push_back(s(c, t));
        yy.push_back(y(c, t));
      }
      CHECK(thr[static_cast<std::size_t>(c)] == oracle_best_threshold(ss, yy));
    }
  }
}

TEST_CASE("single threshold equals per-class on identical class distributions") {
  std::mt19937_64 g(4);
  std::normal_distribution<double> n(0.0, 0.7);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index T = 20;
    Eigen::MatrixXd row_y = random_binary(1, T, 0.4, g);
    row_y(0, 0) = 1;
    Eigen::MatrixXd row_s(1, T);
    for (Eigen::Index t = 0; t < T; ++t) row_s(0, t) = row_y(0, t) + n(g);
    Eigen::MatrixXd y(2, T), s(2, T);
    y << row_y, row_y;
    s << row_s, row_s;
    const auto per = choose_thresholds(roll_of(s), roll_of(y), ThresholdMode::kPerClass);
    const auto single = choose_thresholds(roll_of(s), roll_of(y), ThresholdMode::kSingle);
    CHECK(per == single);
  }
}

TEST_CASE("class without positives never fires") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(2, 10), s(2, 10);
  for (Eigen::Index t = 0; t < 10; ++t) {
    y(0, t) = t % 2;
    s(0, t) = 0.1 * static_cast<double>(t);
    s(1, t) = 0.9;
  }
  for (auto mode : {ThresholdMode::kPerClass, ThresholdMode::kSingle}) {
    const auto thr = choose_thresholds(roll_of(s), roll_of(y), mode);
    CHECK(std::isinf(thr[1]));
    CHECK(apply_thresholds(roll_of(s), thr).values.row(1).sum() == 0.0);
  }
}

TEST_CASE("masked steps do not move thresholds") {
  std::mt19937_64 g(17);
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Index T = 60;
  Eigen::MatrixXd y = random_binary(2, T, 0.3, g), s(2, T);
  y(0, 0) = y(1, 0) = 1;
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = y.data()[i] + n(g);
  ActivationRoll scores = roll_of(s), truth = roll_of(y);
  const auto base = choose_thresholds(scores, truth, ThresholdMode::kPerClass);

  // appending masked steps with wild values
  ActivationRoll s2 = roll_of(Eigen::MatrixXd::Constant(2, T + 10, 50.0));
  ActivationRoll y2 = roll_of(Eigen::MatrixXd::Ones(2, T + 10));
  s2.values.leftCols(T) = s;
  y2.values.leftCols(T) = y;
  for (Eigen::Index t = T; t < T + 10; ++t) y2.na_mask[static_cast<std::size_t>(t)] = 1;
  CHECK(choose_thresholds(s2, y2, ThresholdMode::kPerClass) == base);
  const auto thr = choose_thresholds(s2, y2, ThresholdMode::kPerClass);
  CHECK(micro_f(apply_thresholds(s2, thr), y2).f ==
        micro_f(apply_thresholds(scores, base), truth).f);
}

TEST_CASE("time budget") {
  ActivationRoll on = roll_of(Eigen::MatrixXd::Ones(2, 120));
  const TimeBudget b = time_budget(on, 300.0);
  REQUIRE(b.proportion.cols() == 2);
  CHECK(b.proportion.isOnes());

  ActivationRoll half = roll_of(Eigen::MatrixXd::Constant(1, 60, 0.5));
  const TimeBudget h = time_budget(half, 300.0);
  REQUIRE(h.proportion.cols() == 1);  // 60 steps of 5 s in one 5-minute interval
  CHECK(h.proportion(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  // masked steps leave both numerator and denominator
  ActivationRoll r = roll_of(Eigen::MatrixXd::Zero(1, 8));
  r.values.row(0) << 1, 1, 9, 9, 0, 0, 0, 0;
  r.na_mask = {0, 0, 1, 1, 1, 1, 1, 1};
  const TimeBudget m = time_budget(r, 20.0);
  CHECK(m.proportion(0, 0) == 1.0);
  CHECK(m.defined[0]);
  CHECK_FALSE(m.defined[1]);
  CHECK(std::isnan(m.proportion(0, 1)));

  CHECK_THROWS_AS(time_budget(half, 7.0), ArgumentError);
  CHECK_THROWS_AS(time_budget(half, 0.0), ArgumentError);
}

TEST_CASE("half-split schemes") {
  const Manifest cap = manifest_of(7, 4, Condition::kCaptive, "cap");
  const Scheme each = make_scheme(cap, "EachCap");
  CHECK(each.folds.size() == 14);
  check_disjoint(each);
  // every recording tested exactly once per direction pair
  std::vector<int> tested(cap.entries.size(), 0);
  for (const auto& f : each.folds)
    for (std::size_t i : f.test) ++tested[i];
  for (int n : tested) CHECK(n == 1);

  Manifest both = cap;
  const Manifest field = manifest_of(6, 2, Condition::kField, "fld");
  both.entries.insert(both.entries.end(), field.entries.begin(), field.entries.end());
  CHECK(make_scheme(both, "EachField").folds.size() == 12);
  CHECK(make_scheme(both, "EachCap").folds.size() == 14);
  CHECK(make_scheme(both, "EachSynth").folds.size() == 26);

  const Scheme xy = make_scheme(both, "X-Y");
  REQUIRE(xy.folds.size() == 2);
  check_disjoint(xy);
  CHECK(xy.folds[0].train == xy.folds[1].test);
  for (std::size_t i : xy.folds[0].train) CHECK(both.entries[i].condition == Condition::kCaptive);

  const Scheme cf = make_scheme(both, "Cap-Field");
  REQUIRE(cf.folds.size() == 1);
  CHECK(cf.folds[0].train.size() == 28);
  CHECK(cf.folds[0].test.size() == 12);

  Manifest lonely = manifest_of(2, 2, Condition::kCaptive, "cap");
  lonely.entries.pop_back();
  CHECK_THROWS_AS(make_scheme(lonely, "EachCap"), ConfigError);
  CHECK_THROWS_AS(make_scheme(cap, "EachField"), ConfigError);
  CHECK_THROWS_AS(make_scheme(cap, "Cap-Field"), ConfigError);
  CHECK_THROWS_AS(make_scheme(cap, "Leave-One-Out"), ConfigError);
}

TEST_CASE("A-B splits individuals by duration") {
  testing::TempDir dir("scheme");
  Manifest m;
  const std::vector<std::pair<std::string, double>> recs{
      {"a", 4.0}, {"a", 4.0}, {"b", 3.0}, {"b", 3.0}, {"c", 2.0}, {"c", 1.0}, {"d", 1.0}, {"d", 1.0}};
  for (std::size_t i = 0; i < recs.size(); ++i) {
    ManifestEntry e;
    e.path = recs[i].first + std::to_string(i) + ".wav";
    e.audio = dir / e.path;
    e.individual = recs[i].first;
    write_wav(e.audio, testing::sine(440, recs[i].second, 0.1, 8000));
    m.entries.push_back(e);
  }
  const Scheme s = make_scheme(m, "A-B");
  REQUIRE(s.folds.size() == 2);
  check_disjoint(s);
  auto individuals = [&](const std::vector<std::size_t>& idx) {
    std::set<std::string> out;
    for (std::size_t i : idx) out.insert(m.entries[i].individual);
    return out;
  };
  const auto train = individuals(s.folds[0].train), test = individuals(s.folds[0].test);
  for (const auto& ind : train) CHECK(test.count(ind) == 0);
  CHECK(train.size() + test.size() == 4);
  // greedy on totals 8, 6, 3, 2: a+d = 10, b+c = 9
  CHECK(train == std::set<std::string>{"a", "d"});
  CHECK(test == std::set<std::string>{"b", "c"});
}

TEST_CASE("manifest parsing") {
  testing::TempDir dir("manifest");
  write_text(dir / "ok.csv", "path,individual,condition\nx/r1.wav,bird1,captive\nr2.wav,bird2,field\n");
  const Manifest m = read_manifest(dir / "ok.csv");
  REQUIRE(m.entries.size() == 2);
  CHECK(m.entries[0].audio == dir / "x/r1.wav");
  CHECK(m.entries[0].labels == dir / "x/r1.txt");
  CHECK(m.entries[1].condition == Condition::kField);

  write_manifest(dir / "copy.csv", m);
  const Manifest back = read_manifest(dir / "copy.csv");
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[1].individual == "bird2");

  write_text(dir / "bad.csv", "path,individual,condition\nr1.wav,bird1,captive\nr2.wav,bird2,zoo\n");
  try {
    read_manifest(dir / "bad.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  write_text(dir / "short.csv", "path,individual,condition\nr1.wav,bird1\n");
  try {
    read_manifest(dir / "short.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(read_manifest(dir / "missing.csv"), IoError);
}

TEST_CASE("percentile interpolates linearly") {
  CHECK(percentile({3, 1, 2}, 0.5) == 2.0);
  CHECK(percentile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(percentile({0, 10}, 0.05) == doctest::Approx(0.5));
  CHECK(percentile({7}, 0.95) == 7.0);
  CHECK(std::isnan(percentile({}, 0.5)));
}
