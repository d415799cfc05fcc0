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
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bioctx {

// Binary model container shared by every serialized artifact:
//
//   offset  size  content
//   0       8     magic (ASCII, e.g. "BCTXBAS1")
//   8       8     header length H, uint64 little-endian
//   16      H     JSON header, UTF-8
//   16+H    8     payload count N, uint64 little-endian
//   24+H    8N    payload, IEEE-754 float64 little-endian
//
// The header describes how the flat payload is laid out. Integers stored in
// the payload are exact below 2^53.
struct Blob {
  nlohmann::json header;
  std::vector<double> payload;
};

void write_blob(const std::filesystem::path& path, std::string_view magic,
                const nlohmann::json& header, std::span<const double> payload);
std::string encode_blob(std::string_view magic, const nlohmann::json& header,
                        std::span<const double> payload);

Blob read_blob(const std::filesystem::path& path, std::string_view magic);
Blob decode_blob(std::string_view bytes, std::string_view magic);

// Sequential reader over a payload; throws FormatError on overrun.
class PayloadReader {
 public:
  explicit PayloadReader(std::span<const double> data) : data_(data) {}
  double next();
  std::span<const double> take(std::size_t n);
  bool done() const { return pos_ == data_.size(); }

 private:
  std::span<const double> data_;
  std::size_t pos_ = 0;
};

}  // namespace bioctx
