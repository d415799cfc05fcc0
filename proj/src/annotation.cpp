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

#include "bioctx/annotation.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <toml.hpp>

#include "bioctx/error.hpp"

namespace bioctx {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

bool parse_seconds(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

AnnotationTrack parse_label_track(std::string_view text) {
  AnnotationTrack track;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;

    const std::size_t t1 = line.find('\t');
    const std::size_t t2 =
        t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos)
      throw ParseError(line_no, "expected start<TAB>end<TAB>label");
    AnnotationEvent ev;
    if (!parse_seconds(line.substr(0, t1), ev.start) ||
        !parse_seconds(line.substr(t1 + 1, t2 - t1 - 1), ev.end))
      throw ParseError(line_no, "non-numeric time");
    ev.label = std::string(trim(line.substr(t2 + 1)));
    if (ev.start < 0.0) throw ParseError(line_no, "negative start time");
    if (ev.end <= ev.start) throw ParseError(line_no, "end <= start");
    if (ev.label.empty()) throw ParseError(line_no, "empty label");
    track.duration = std::max(track.duration, ev.end);
    track.events.push_back(std::move(ev));
  }
  return track;
}

AnnotationTrack read_label_track(const std::filesystem::path& path) {
  try {
    return parse_label_track(read_text(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

std::string format_label_track(const AnnotationTrack& track) {
  std::string out;
  for (const auto& ev : track.events)
    out += fmt::format("{:f}\t{:f}\t{}\n", ev.start, ev.end, ev.label);
  return out;
}

void write_label_track(const std::filesystem::path& path,
                       const AnnotationTrack& track) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << format_label_track(track);
  if (!out) throw IoError(path.string() + ": write failed");
}

void CategoryMap::add(std::string_view raw, std::string_view category) {
  mapping[lower(raw)] = std::string(category);
  if (category != na_label &&
      std::find(categories.begin(), categories.end(), category) ==
          categories.end())
    categories.emplace_back(category);
}

const std::string* CategoryMap::find(std::string_view raw) const {
  auto it = mapping.find(lower(raw));
  return it == mapping.end() ? nullptr : &it->second;
}

CategoryMap default_category_map() {
  CategoryMap m;
  const std::pair<const char*, const char*> rows[] = {
      {"Flying", "Flying"},
      {"Run", "Walking"},
      {"Walk", "Walking"},
      {"Look", "Looking around"},
      {"Food", "Manipulation"},
      {"Stick", "Manipulation"},
      {"Bill-wipe", "Self-maintenance"},
      {"Preen", "Self-maintenance"},
      {"Turn", "Small movement"},
      {"Body", "Shaking"},
      {"Head", "Shaking"},
      {"Contact call", "Focal call"},
      {"Non-focal call", "Non-focal call"},
      {"Allofeed vocalisation", "Allofeed vocalisation"},
      {"Bg mobbing", "Background call"},
      {"Carrion crow", "Carrion crow"},
      {"Hen", "Chickens"},
      {"Cock", "Chickens"},
      {"Church bells", "Colony sounds"},
      {"Traffic noise", "Noise"},
      {"Allofeeding", "Allofeeding"},
      {"Copulation", "Copulation"},
      {"Entering nest", "Nest"},
      {"Antenna", "Antenna"},
      {"Missing video", "NA"},
  };
  for (const auto& [raw, cat] : rows) m.add(raw, cat);
  return m;
}

CategoryMap load_category_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open category map");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_category_map(ss.str(), path.string());
}

CategoryMap parse_category_map(std::string_view text, std::string_view origin) {
  const std::string where(origin);
  toml::table tbl;
  try {
    tbl = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    throw ConfigError(where + ": " + std::string(e.description()));
  }
  CategoryMap m;
  if (auto na = tbl["na_label"].value<std::string>()) m.na_label = *na;
  const toml::table* labels = tbl["labels"].as_table();
  if (labels == nullptr)
    throw ConfigError(where + ": missing [labels] table");
  for (const auto& [key, node] : *labels) {
    auto value = node.value<std::string>();
    if (!value)
      throw ConfigError(where + ": label '" + std::string(key.str()) +
                        "' must map to a string");
    m.add(key.str(), *value);
  }
  for (const auto& [key, node] : tbl) {
    if (key != "labels" && key != "na_label" && key != "categories")
      throw ConfigError(where + ": unknown key '" +
                        std::string(key.str()) + "'");
  }
  if (const toml::array* order = tbl["categories"].as_array()) {
    std::vector<std::string> cats;
    for (const auto& node : *order) {
      auto name = node.value<std::string>();
      if (!name) throw ConfigError(where + ": categories must be strings");
      cats.push_back(*name);
    }
    std::set<std::string> listed(cats.begin(), cats.end());
    for (const auto& c : m.categories)
      if (!listed.count(c))
        throw ConfigError(where + ": category '" + c +
                          "' missing from categories list");
    m.categories = std::move(cats);
  } else {
    std::sort(m.categories.begin(), m.categories.end());
  }
  return m;
}

std::string format_category_map(const CategoryMap& map) {
  toml::table tbl;
  tbl.insert("na_label", map.na_label);
  toml::array cats;
  for (const auto& c : map.categories) cats.push_back(c);
  tbl.insert("categories", std::move(cats));
  toml::table labels;
  for (const auto& [raw, cat] : map.mapping) labels.insert(raw, cat);
  tbl.insert("labels", std::move(labels));
  std::ostringstream ss;
  ss << tbl << '\n';
  return ss.str();
}

AnnotationTrack map_labels(const AnnotationTrack& track, const CategoryMap& map) {
  AnnotationTrack out;
  out.duration = track.duration;
  out.events.reserve(track.events.size());
  for (const auto& ev : track.events) {
    AnnotationEvent mapped = ev;
    if (lower(ev.label) == lower(map.na_label)) {
      mapped.label = map.na_label;
    } else if (const std::string* cat = map.find(ev.label)) {
      mapped.label = *cat;
    } else {
      throw ConfigError("unmapped annotation label '" + ev.label + "'");
    }
    out.events.push_back(std::move(mapped));
  }
  return out;
}

}  // namespace bioctx
