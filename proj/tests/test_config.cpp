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

#include <fstream>
#include <set>

#include "bioctx/config.hpp"
#include "bioctx/error.hpp"
#include "support.hpp"

using namespace bioctx;

TEST_CASE("defaults resolve") {
  const Config c;
  CHECK(c.values().size() == config_keys().size());
  const RunConfig r = resolve(c);
  CHECK(r.system == SystemKind::kClassifier);
  CHECK(r.postproc == PostProc::kNone);
  CHECK(r.segment == 5.0);
  CHECK(r.features == 500);
  CHECK(r.trees == 200);
  CHECK(r.exemplars == 40);
  CHECK(r.pooling == PlcaPooling::kMean);
  CHECK_FALSE(r.single_threshold);
  CHECK(r.f_average == FAverage::kMicro);
  CHECK(r.erb.n_bands == 250);
}

TEST_CASE("keys are unique and defaults parse") {
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    CHECK(names.insert(k.name).second);
    CHECK_FALSE(k.help.empty());
    Config c;
    if (!k.default_value.empty()) CHECK_NOTHROW(c.set(k.name, k.default_value));
    if (k.type == KeyType::kChoice) {
      CHECK_FALSE(k.choices.empty());
      for (const auto& ch : k.choices) CHECK_NOTHROW(c.set(k.name, ch));
    }
  }
  CHECK(find_config_key("trees") != nullptr);
  CHECK(find_config_key("tress") == nullptr);
}

TEST_CASE("file values then explicit values") {
  testing::TempDir dir("config");
  std::ofstream(dir / "run.toml") << "system = \"plca\"\ntrees = 12\nsegment = 0.1\n"
                                     "# comment\nscheme = \"X-Y\"\n";
  Config c;
  c.merge_toml_file(dir / "run.toml");
  CHECK(c.get_string("system") == "plca");
  CHECK(c.get_int("trees") == 12);
  CHECK(c.get_real("segment") == 0.1);
  c.set("trees", "30");
  CHECK(c.get_int("trees") == 30);
  CHECK(c.get_text("segment") == "0.1");

  // a TOML integer is accepted for a real key
  c.merge_toml_text("segment = 2");
  CHECK(c.get_real("segment") == 2.0);

  Config back;
  back.merge_toml_text(c.to_toml());
  CHECK(back.values() == c.values());
}

TEST_CASE("bad settings are configuration errors") {
  Config c;
  CHECK_THROWS_AS(c.set("no-such-key", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("trees", "many"), ConfigError);
  CHECK_THROWS_AS(c.set("trees", "1.5"), ConfigError);
  CHECK_THROWS_AS(c.set("segment", "fast"), ConfigError);
  CHECK_THROWS_AS(c.set("system", "svm"), ConfigError);
  CHECK_THROWS_AS(c.merge_toml_text("unknown = 3"), ConfigError);
  CHECK_THROWS_AS(c.merge_toml_text("trees = 2.5"), ConfigError);
  CHECK_THROWS_AS(c.merge_toml_text("system = 3"), ConfigError);
  CHECK_THROWS_AS(c.merge_toml_text("[plca]\nexemplars = 3"), ConfigError);
  CHECK_THROWS_AS(c.merge_toml_text("trees = "), ConfigError);
  CHECK_THROWS_AS(c.merge_toml_file("/nonexistent/run.toml"), ConfigError);
  CHECK_THROWS_AS(c.get_int("system"), ConfigError);
  // a failed set leaves the old value
  CHECK(c.get_int("trees") == 200);
}

TEST_CASE("cross-key checks") {
  auto bad = [](std::initializer_list<std::pair<const char*, const char*>> kv) {
    Config c;
    for (const auto& [k, v] : kv) c.set(k, v);
    return c;
  };
  CHECK_THROWS_AS(resolve(bad({{"system", "plca"}, {"pooling", "highres"}, {"postproc", "joint-viterbi"}})), ConfigError);
  CHECK_THROWS_AS(resolve(bad({{"system", "plca"}, {"pooling", "highres"}, {"postproc", "perclass-filter"}})), ConfigError);
  CHECK_NOTHROW(resolve(bad({{"pooling", "highres"}, {"system", "plca"}})));
  CHECK_THROWS_AS(resolve(bad({{"trees", "0"}})), ConfigError);
  CHECK_THROWS_AS(resolve(bad({{"segment", "-1"}})), ConfigError);
  CHECK_THROWS_AS(resolve(bad({{"min-samples-split", "1"}})), ConfigError);
  CHECK_THROWS_AS(resolve(bad({{"erb-min-hz", "11000"}})), ConfigError);
  CHECK_THROWS_AS(resolve(bad({{"preemphasis-floor", "-0.1"}})), ConfigError);

  const RunConfig r = resolve(bad({{"threshold-mode", "single"},
                                   {"postproc", "perclass-filter"},
                                   {"weighting", "balanced"},
                                   {"na-policy", "majority"}}));
  CHECK(r.single_threshold);
  CHECK(r.postproc == PostProc::kPerClassFilter);
  CHECK(r.balanced);
  CHECK(r.na_policy == NaPolicy::kMajority);
  CHECK(postproc_name(r.postproc) == "perclass-filter");
}
