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
#include <string>
#include <string_view>
#include <vector>

namespace bioctx {

enum class Condition { kCaptive, kField };

std::string_view condition_name(Condition c);
Condition parse_condition(std::string_view text);

struct ManifestEntry {
  std::string path;                 // as written in the manifest
  std::filesystem::path audio;      // resolved against the manifest directory
  std::filesystem::path labels;     // audio path with a .txt extension
  std::string individual;
  Condition condition = Condition::kCaptive;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

// CSV with header `path,individual,condition`. Relative paths resolve
// against the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct Fold {
  std::string id;
  std::vector<std::size_t> train;  // manifest entry indices
  std::vector<std::size_t> test;
};

struct Scheme {
  std::string name;
  std::vector<Fold> folds;
};

// EachCap, EachField, X-Y, A-B, Cap-Field, and EachSynth (per-individual
// half-splits regardless of condition). Half-splits alternate over each
// individual's recordings sorted by path. A-B balances total recording
// duration, read from the WAV headers.
Scheme make_scheme(const Manifest& manifest, std::string_view name);

const std::vector<std::string>& scheme_names();

}  // namespace bioctx
