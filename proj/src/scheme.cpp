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

#include "bioctx/scheme.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/core.h>

#include "bioctx/audio.hpp"
#include "bioctx/error.hpp"

namespace bioctx {
namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// individual -> entry indices sorted by path
std::map<std::string, std::vector<std::size_t>> by_individual(
    const Manifest& m, const std::vector<std::size_t>& subset) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i : subset) out[m.entries[i].individual].push_back(i);
  for (auto& [ind, idx] : out)
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return m.entries[a].path < m.entries[b].path;
    });
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> halves(
    const std::string& individual, const std::vector<std::size_t>& idx) {
  if (idx.size() < 2)
    throw ConfigError(fmt::format(
        "individual '{}' has {} recording(s); half-split schemes need at least 2", individual,
        idx.size()));
  std::vector<std::size_t> a, b;
  for (std::size_t k = 0; k < idx.size(); ++k) (k % 2 == 0 ? a : b).push_back(idx[k]);
  return {a, b};
}

std::vector<std::size_t> select(const Manifest& m, const Condition* cond) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (!cond || m.entries[i].condition == *cond) out.push_back(i);
  return out;
}

void sort_fold(Fold& f) {
  std::sort(f.train.begin(), f.train.end());
  std::sort(f.test.begin(), f.test.end());
}

Scheme per_individual(const Manifest& m, const std::vector<std::size_t>& subset,
                      std::string name) {
  Scheme s{std::move(name), {}};
  if (subset.empty()) throw ConfigError(fmt::format("scheme {}: no matching recordings", s.name));
  for (const auto& [ind, idx] : by_individual(m, subset)) {
    auto [a, b] = halves(ind, idx);
    s.folds.push_back({ind + "/A-B", a, b});
    s.folds.push_back({ind + "/B-A", b, a});
  }
  for (auto& f : s.folds) sort_fold(f);
  return s;
}

}  // namespace

std::string_view condition_name(Condition c) {
  return c == Condition::kCaptive ? "captive" : "field";
}

Condition parse_condition(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "captive") return Condition::kCaptive;
  if (lower == "field") return Condition::kField;
  throw DataError(fmt::format("unknown condition '{}' (expected captive or field)", text));
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open manifest {}", path.string()));
  const auto base = path.parent_path();
  Manifest m;
  std::string line;
  int line_no = 0;
  int col_path = -1, col_ind = -1, col_cond = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (col_path < 0) {
      for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
        if (cells[static_cast<std::size_t>(i)] == "path") col_path = i;
        if (cells[static_cast<std::size_t>(i)] == "individual") col_ind = i;
        if (cells[static_cast<std::size_t>(i)] == "condition") col_cond = i;
      }
      if (col_path < 0 || col_ind < 0 || col_cond < 0)
        throw ParseError(line_no, "manifest header must name path, individual, condition");
      continue;
    }
    const int need = std::max({col_path, col_ind, col_cond});
    if (static_cast<int>(cells.size()) <= need)
      throw ParseError(line_no, "manifest row has too few columns");
    ManifestEntry e;
    e.path = cells[static_cast<std::size_t>(col_path)];
    e.individual = cells[static_cast<std::size_t>(col_ind)];
    if (e.path.empty() || e.individual.empty())
      throw ParseError(line_no, "manifest row has an empty path or individual");
    try {
      e.condition = parse_condition(cells[static_cast<std::size_t>(col_cond)]);
    } catch (const DataError& err) {
      throw ParseError(line_no, err.what());
    }
    std::filesystem::path p(e.path);
    e.audio = p.is_absolute() ? p : base / p;
    e.labels = e.audio;
    e.labels.replace_extension(".txt");
    m.entries.push_back(std::move(e));
  }
  if (col_path < 0) throw ParseError(1, "manifest is empty");
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write manifest {}", path.string()));
  out << "path,individual,condition\n";
  for (const auto& e : manifest.entries)
    out << e.path << ',' << e.individual << ',' << condition_name(e.condition) << '\n';
  if (!out) throw IoError(fmt::format("failed writing manifest {}", path.string()));
}

const std::vector<std::string>& scheme_names() {
  static const std::vector<std::string> names{"EachCap", "EachField", "X-Y",
                                              "A-B",     "Cap-Field", "EachSynth"};
  return names;
}

Scheme make_scheme(const Manifest& m, std::string_view name) {
  const Condition captive = Condition::kCaptive;
  const Condition field = Condition::kField;
  if (name == "EachCap") return per_individual(m, select(m, &captive), "EachCap");
  if (name == "EachField") return per_individual(m, select(m, &field), "EachField");
  if (name == "EachSynth") return per_individual(m, select(m, nullptr), "EachSynth");
  if (name == "X-Y") {
    Fold xy{"X-Y", {}, {}};
    const auto subset = select(m, &captive);
    if (subset.empty()) throw ConfigError("scheme X-Y: no captive recordings");
    for (const auto& [ind, idx] : by_individual(m, subset)) {
      auto [a, b] = halves(ind, idx);
      xy.train.insert(xy.train.end(), a.begin(), a.end());
      xy.test.insert(xy.test.end(), b.begin(), b.end());
    }
    Fold yx{"Y-X", xy.test, xy.train};
    sort_fold(xy);
    sort_fold(yx);
    return {"X-Y", {xy, yx}};
  }
  if (name == "A-B") {
    const auto groups = by_individual(m, select(m, &captive));
    if (groups.size() < 2) throw ConfigError("scheme A-B needs at least 2 captive individuals");
    std::vector<std::pair<double, std::string>> totals;
    for (const auto& [ind, idx] : groups) {
      double total = 0.0;
      for (std::size_t i : idx) total += read_wav_info(m.entries[i].audio).duration();
      totals.emplace_back(total, ind);
    }
    std::sort(totals.begin(), totals.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    Fold ab{"A-B", {}, {}};
    double dur_a = 0.0, dur_b = 0.0;
    for (const auto& [total, ind] : totals) {
      const auto& idx = groups.at(ind);
      if (dur_a <= dur_b) {
        ab.train.insert(ab.train.end(), idx.begin(), idx.end());
        dur_a += total;
      } else {
        ab.test.insert(ab.test.end(), idx.begin(), idx.end());
        dur_b += total;
      }
    }
    Fold ba{"B-A", ab.test, ab.train};
    sort_fold(ab);
    sort_fold(ba);
    return {"A-B", {ab, ba}};
  }
  if (name == "Cap-Field") {
    Fold f{"Cap-Field", select(m, &captive), select(m, &field)};
    if (f.train.empty() || f.test.empty())
      throw ConfigError("scheme Cap-Field needs both captive and field recordings");
    return {"Cap-Field", {f}};
  }
  throw ConfigError(fmt::format("unknown scheme '{}' (expected one of EachCap, EachField, X-Y, "
                                "A-B, Cap-Field, EachSynth)",
                                name));
}

}  // namespace bioctx
