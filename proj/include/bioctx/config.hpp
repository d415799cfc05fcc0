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
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bioctx/frontend.hpp"
#include "bioctx/roll.hpp"

namespace bioctx {

enum class KeyType { kString, kInt, kReal, kChoice };

struct ConfigKey {
  std::string name;
  KeyType type;
  std::string default_value;
  std::string help;
  std::vector<std::string> choices;  // kChoice only
};

// Every run setting, in help order.
const std::vector<ConfigKey>& config_keys();
const ConfigKey* find_config_key(std::string_view name);

// Flat key/value settings. Values are validated against the key registry
// as they are set; unknown keys raise ConfigError.
class Config {
 public:
  using Value = std::variant<std::int64_t, double, std::string>;

  Config();  // all defaults

  void set(std::string_view key, std::string_view text);
  // Top-level TOML keys only; nested tables are rejected.
  void merge_toml_file(const std::filesystem::path& path);
  void merge_toml_text(std::string_view text, std::string_view origin = "config");

  std::string get_text(std::string_view key) const;
  std::int64_t get_int(std::string_view key) const;
  double get_real(std::string_view key) const;
  const std::string& get_string(std::string_view key) const;

  const std::map<std::string, Value>& values() const { return values_; }
  std::string to_toml() const;

 private:
  const Value& at(std::string_view key) const;
  std::map<std::string, Value> values_;
};

enum class SystemKind { kClassifier, kPlca };
enum class PostProc { kNone, kJointViterbi, kPerClassViterbi, kJointFilter, kPerClassFilter };
enum class PlcaPooling { kMean, kMax, kHighRes };
enum class FAverage { kMicro, kMacro };

std::string_view postproc_name(PostProc p);

// Typed view of a Config with cross-key checks applied.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path categories;
  std::filesystem::path output;
  std::string scheme;
  std::uint64_t seed = 1;
  int jobs = 1;

  SystemKind system = SystemKind::kClassifier;
  PostProc postproc = PostProc::kNone;
  bool single_threshold = false;
  double segment = 5.0;
  NaPolicy na_policy = NaPolicy::kAny;
  FAverage f_average = FAverage::kMicro;
  double budget_interval = 300.0;

  MelOptions mel;
  ErbOptions erb;
  PreemphasisOptions preemphasis;

  int features = 500;
  int kmeans_iters = 1;
  int patch_frames = 4;
  int patch_stride = 4;

  int trees = 200;
  bool balanced = false;
  int max_features = 0;
  int min_samples_split = 2;

  int exemplars = 40;
  int em_iters = 30;
  double min_duration = 0.12;
  PlcaPooling pooling = PlcaPooling::kMean;
  int dict_kmeans_iters = 100;
  int dict_max_frames = 20000;

  int hmm_components = 8;
  int hmm_ubm_iters = 50;
  int hmm_state_iters = 20;
};

RunConfig resolve(const Config& config);

}  // namespace bioctx
