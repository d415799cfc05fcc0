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

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bioctx {

struct AnnotationEvent {
  double start = 0.0;  // seconds
  double end = 0.0;    // seconds, > start
  std::string label;

  bool operator==(const AnnotationEvent&) const = default;
};

// Events of different labels may overlap.
struct AnnotationTrack {
  std::vector<AnnotationEvent> events;
  double duration = 0.0;
};

// Audacity label-track text: one `start<TAB>end<TAB>label` row per line.
// Blank lines are skipped. Throws ParseError carrying the 1-based line number.
// `duration` defaults to the latest event end.
AnnotationTrack parse_label_track(std::string_view text);
AnnotationTrack read_label_track(const std::filesystem::path& path);

std::string format_label_track(const AnnotationTrack& track);
void write_label_track(const std::filesystem::path& path,
                       const AnnotationTrack& track);

// Raw annotation label -> analysis category. Lookup is case-insensitive.
struct CategoryMap {
  std::map<std::string, std::string> mapping;  // lowercased raw -> category
  std::vector<std::string> categories;         // fixed analysis order
  std::string na_label = "NA";

  void add(std::string_view raw, std::string_view category);
  // nullptr when the label is unknown.
  const std::string* find(std::string_view raw) const;
};

// The behavioural/contextual grouping used for jackdaw logger annotations.
CategoryMap default_category_map();

// TOML layout:
//   na_label = "NA"                    # optional
//   categories = ["Flying", ...]       # optional; otherwise sorted names
//   [labels]
//   "Contact call" = "Focal call"
CategoryMap load_category_map(const std::filesystem::path& path);
CategoryMap parse_category_map(std::string_view text, std::string_view origin = "categories");
std::string format_category_map(const CategoryMap& map);

// Replaces raw labels by their category. Labels that spell the NA label map
// to it. Unknown labels raise ConfigError naming the label.
AnnotationTrack map_labels(const AnnotationTrack& track, const CategoryMap& map);

}  // namespace bioctx
