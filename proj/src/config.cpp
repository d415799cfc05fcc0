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

#include "bioctx/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <toml.hpp>

#include "bioctx/error.hpp"

namespace bioctx {
namespace {

const std::vector<ConfigKey> kKeys = {
    {"manifest", KeyType::kString, "", "corpus manifest CSV (path,individual,condition)", {}},
    {"categories", KeyType::kString, "",
     "category map TOML; empty uses categories.toml beside the manifest, else the built-in map", {}},
    {"output", KeyType::kString, "bioctx-out", "output directory for reports and models", {}},
    {"scheme", KeyType::kChoice, "EachCap", "crossvalidation scheme",
     {"EachCap", "EachField", "X-Y", "A-B", "Cap-Field", "EachSynth"}},
    {"seed", KeyType::kInt, "1", "master random seed", {}},
    {"jobs", KeyType::kInt, "1", "worker threads", {}},

    {"system", KeyType::kChoice, "classifier", "recognition system", {"classifier", "plca"}},
    {"postproc", KeyType::kChoice, "none", "HMM postprocessing",
     {"none", "joint-viterbi", "perclass-viterbi", "joint-filter", "perclass-filter"}},
    {"threshold-mode", KeyType::kChoice, "per_class", "binarisation thresholds",
     {"per_class", "single"}},
    {"segment", KeyType::kReal, "5.0", "evaluation segment length (s)", {}},
    {"na-policy", KeyType::kChoice, "any",
     "segment counts as missing when NA covers any part or at least half of it",
     {"any", "majority"}},
    {"f-average", KeyType::kChoice, "micro", "headline F score averaging", {"micro", "macro"}},
    {"budget-interval", KeyType::kReal, "300.0", "time-budget interval (s)", {}},

    {"mel-bands", KeyType::kInt, "40", "Mel bands (classifier)", {}},
    {"erb-bands", KeyType::kInt, "250", "ERB bands (PLCA)", {}},
    {"erb-min-hz", KeyType::kReal, "5.0", "lowest ERB band center (Hz)", {}},
    {"erb-max-hz", KeyType::kReal, "10800.0", "highest ERB band center (Hz)", {}},
    {"preemphasis-floor", KeyType::kReal, "0.05", "minimum pre-emphasis gain", {}},
    {"preemphasis-ref-hz", KeyType::kReal, "10800.0", "frequency of unit pre-emphasis gain (Hz)", {}},

    {"features", KeyType::kInt, "500", "learned features K", {}},
    {"kmeans-iters", KeyType::kInt, "1", "spherical k-means passes", {}},
    {"patch-frames", KeyType::kInt, "4", "frames per patch", {}},
    {"patch-stride", KeyType::kInt, "4", "patch stride when learning features", {}},

    {"trees", KeyType::kInt, "200", "random forest size", {}},
    {"weighting", KeyType::kChoice, "unbalanced", "class weighting", {"unbalanced", "balanced"}},
    {"max-features", KeyType::kInt, "0", "features tried per split; 0 means floor(sqrt(D))", {}},
    {"min-samples-split", KeyType::kInt, "2", "smallest node that may split", {}},

    {"exemplars", KeyType::kInt, "40", "PLCA exemplars per class", {}},
    {"em-iters", KeyType::kInt, "30", "PLCA EM iterations", {}},
    {"min-duration", KeyType::kReal, "0.12", "shortest kept PLCA detection (s)", {}},
    {"pooling", KeyType::kChoice, "mean", "PLCA frame-to-segment pooling",
     {"mean", "max", "highres"}},
    {"dict-kmeans-iters", KeyType::kInt, "100", "k-means iterations for exemplars", {}},
    {"dict-max-frames", KeyType::kInt, "20000", "per-class frame cap for exemplar clustering", {}},

    {"hmm-components", KeyType::kInt, "8", "largest GMM size tried by BIC", {}},
    {"hmm-ubm-iters", KeyType::kInt, "50", "EM iterations for the background GMM", {}},
    {"hmm-state-iters", KeyType::kInt, "20", "EM iterations per state GMM", {}},
};

Config::Value parse_value(const ConfigKey& key, std::string_view text) {
  switch (key.type) {
    case KeyType::kString:
      return std::string(text);
    case KeyType::kInt: {
      std::int64_t v = 0;
      const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || p != text.data() + text.size())
        throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key.name, text));
      return v;
    }
    case KeyType::kReal: {
      const std::string s(text);
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != s.size() || !std::isfinite(v))
        throw ConfigError(fmt::format("{}: expected a number, got '{}'", key.name, text));
      return v;
    }
    case KeyType::kChoice:
      for (const auto& c : key.choices)
        if (c == text) return c;
      {
        std::string all;
        for (const auto& c : key.choices) all += (all.empty() ? "" : ", ") + c;
        throw ConfigError(fmt::format("{}: '{}' is not one of {}", key.name, text, all));
      }
  }
  throw ConfigError("bad key type");
}

const ConfigKey& require_key(std::string_view name) {
  const ConfigKey* k = find_config_key(name);
  if (!k) throw ConfigError(fmt::format("unknown config key '{}'", name));
  return *k;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() { return kKeys; }

const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : kKeys)
    if (k.name == name) return &k;
  return nullptr;
}

Config::Config() {
  for (const auto& k : kKeys) values_[k.name] = parse_value(k, k.default_value);
}

void Config::set(std::string_view key, std::string_view text) {
  const ConfigKey& k = require_key(key);
  values_[k.name] = parse_value(k, text);
}

void Config::merge_toml_text(std::string_view text, std::string_view origin) {
  toml::table tbl;
  try {
    tbl = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("{}: {} (line {})", origin, e.description(),
                                  e.source().begin.line));
  }
  for (const auto& [k, node] : tbl) {
    const std::string name(k.str());
    const ConfigKey& key = require_key(name);
    std::string text_value;
    if (const auto* s = node.as_string()) {
      text_value = s->get();
    } else if (const auto* i = node.as_integer()) {
      text_value = std::to_string(i->get());
    } else if (const auto* f = node.as_floating_point()) {
      text_value = fmt::format("{}", f->get());
    } else {
      throw ConfigError(fmt::format("{}: key '{}' must be a string or number", origin, name));
    }
    if (key.type == KeyType::kInt && node.is_floating_point())
      throw ConfigError(fmt::format("{}: key '{}' must be an integer", origin, name));
    if ((key.type == KeyType::kString || key.type == KeyType::kChoice) && !node.is_string())
      throw ConfigError(fmt::format("{}: key '{}' must be a string", origin, name));
    values_[key.name] = parse_value(key, text_value);
  }
}

void Config::merge_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read config file {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  merge_toml_text(ss.str(), path.string());
}

const Config::Value& Config::at(std::string_view key) const {
  require_key(key);
  return values_.at(std::string(key));
}

std::string Config::get_text(std::string_view key) const {
  const Value& v = at(key);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) return fmt::format("{}", *d);
  return std::get<std::string>(v);
}

std::int64_t Config::get_int(std::string_view key) const {
  const auto* v = std::get_if<std::int64_t>(&at(key));
  if (!v) throw ConfigError(fmt::format("{} is not an integer key", key));
  return *v;
}

double Config::get_real(std::string_view key) const {
  const auto* v = std::get_if<double>(&at(key));
  if (!v) throw ConfigError(fmt::format("{} is not a real-valued key", key));
  return *v;
}

const std::string& Config::get_string(std::string_view key) const {
  const auto* v = std::get_if<std::string>(&at(key));
  if (!v) throw ConfigError(fmt::format("{} is not a string key", key));
  return *v;
}

std::string Config::to_toml() const {
  toml::table tbl;
  for (const auto& k : kKeys) {
    const Value& v = values_.at(k.name);
    if (const auto* i = std::get_if<std::int64_t>(&v)) tbl.insert(k.name, *i);
    else if (const auto* d = std::get_if<double>(&v)) tbl.insert(k.name, *d);
    else tbl.insert(k.name, std::get<std::string>(v));
  }
  std::ostringstream ss;
  ss << tbl << '\n';
  return ss.str();
}

std::string_view postproc_name(PostProc p) {
  switch (p) {
    case PostProc::kNone: return "none";
    case PostProc::kJointViterbi: return "joint-viterbi";
    case PostProc::kPerClassViterbi: return "perclass-viterbi";
    case PostProc::kJointFilter: return "joint-filter";
    case PostProc::kPerClassFilter: return "perclass-filter";
  }
  return "none";
}

RunConfig resolve(const Config& c) {
  RunConfig r;
  auto positive_int = [&](std::string_view key) {
    const std::int64_t v = c.get_int(key);
    if (v < 1 || v > 1'000'000'000)
      throw ConfigError(fmt::format("{} must be a positive integer", key));
    return static_cast<int>(v);
  };
  auto positive_real = [&](std::string_view key) {
    const double v = c.get_real(key);
    if (!(v > 0.0)) throw ConfigError(fmt::format("{} must be positive", key));
    return v;
  };

  r.manifest = c.get_string("manifest");
  r.categories = c.get_string("categories");
  r.output = c.get_string("output");
  r.scheme = c.get_string("scheme");
  r.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  r.jobs = positive_int("jobs");

  r.system = c.get_string("system") == "plca" ? SystemKind::kPlca : SystemKind::kClassifier;
  const std::string& pp = c.get_string("postproc");
  r.postproc = pp == "joint-viterbi"      ? PostProc::kJointViterbi
               : pp == "perclass-viterbi" ? PostProc::kPerClassViterbi
               : pp == "joint-filter"     ? PostProc::kJointFilter
               : pp == "perclass-filter"  ? PostProc::kPerClassFilter
                                          : PostProc::kNone;
  r.single_threshold = c.get_string("threshold-mode") == "single";
  r.segment = positive_real("segment");
  r.na_policy = c.get_string("na-policy") == "majority" ? NaPolicy::kMajority : NaPolicy::kAny;
  r.f_average = c.get_string("f-average") == "macro" ? FAverage::kMacro : FAverage::kMicro;
  r.budget_interval = positive_real("budget-interval");

  r.mel.n_bands = positive_int("mel-bands");
  r.erb.n_bands = positive_int("erb-bands");
  r.erb.min_hz = positive_real("erb-min-hz");
  r.erb.max_hz = positive_real("erb-max-hz");
  if (r.erb.n_bands < 2 || r.erb.max_hz <= r.erb.min_hz)
    throw ConfigError("ERB filterbank needs at least 2 bands and erb-max-hz > erb-min-hz");
  r.preemphasis.floor = c.get_real("preemphasis-floor");
  if (r.preemphasis.floor < 0.0) throw ConfigError("preemphasis-floor must be >= 0");
  r.preemphasis.reference_hz = positive_real("preemphasis-ref-hz");

  r.features = positive_int("features");
  r.kmeans_iters = positive_int("kmeans-iters");
  r.patch_frames = positive_int("patch-frames");
  r.patch_stride = positive_int("patch-stride");

  r.trees = positive_int("trees");
  r.balanced = c.get_string("weighting") == "balanced";
  const std::int64_t mf = c.get_int("max-features");
  if (mf < 0) throw ConfigError("max-features must be >= 0");
  r.max_features = static_cast<int>(mf);
  r.min_samples_split = positive_int("min-samples-split");
  if (r.min_samples_split < 2) throw ConfigError("min-samples-split must be at least 2");

  r.exemplars = positive_int("exemplars");
  r.em_iters = positive_int("em-iters");
  r.min_duration = c.get_real("min-duration");
  if (r.min_duration < 0.0) throw ConfigError("min-duration must be >= 0");
  const std::string& pool = c.get_string("pooling");
  r.pooling = pool == "max" ? PlcaPooling::kMax
              : pool == "highres" ? PlcaPooling::kHighRes
                                  : PlcaPooling::kMean;
  if (r.system == SystemKind::kPlca && r.pooling == PlcaPooling::kHighRes &&
      r.postproc != PostProc::kNone)
    throw ConfigError("pooling = highres cannot be combined with HMM postprocessing");
  r.dict_kmeans_iters = positive_int("dict-kmeans-iters");
  r.dict_max_frames = positive_int("dict-max-frames");

  r.hmm_components = positive_int("hmm-components");
  r.hmm_ubm_iters = positive_int("hmm-ubm-iters");
  r.hmm_state_iters = positive_int("hmm-state-iters");
  return r;
}

}  // namespace bioctx
