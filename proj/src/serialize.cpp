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

#include "bioctx/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bioctx/error.hpp"

namespace bioctx {

static_assert(std::endian::native == std::endian::little,
              "blob encoding assumes a little-endian host");

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(std::string_view bytes, std::size_t at) {
  std::uint64_t v = 0;
  std::memcpy(&v, bytes.data() + at, 8);
  return v;
}

}  // namespace

std::string encode_blob(std::string_view magic, const nlohmann::json& header,
                        std::span<const double> payload) {
  if (magic.size() != 8) throw ArgumentError("blob magic must be 8 bytes");
  const std::string text = header.dump();
  std::string out;
  out.reserve(24 + text.size() + payload.size() * 8);
  out.append(magic);
  put_u64(out, text.size());
  out.append(text);
  put_u64(out, payload.size());
  out.append(reinterpret_cast<const char*>(payload.data()), payload.size() * 8);
  return out;
}

void write_blob(const std::filesystem::path& path, std::string_view magic,
                const nlohmann::json& header, std::span<const double> payload) {
  const std::string bytes = encode_blob(magic, header, payload);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

Blob decode_blob(std::string_view bytes, std::string_view magic) {
  if (bytes.size() < 16 || bytes.substr(0, 8) != magic)
    throw FormatError("bad blob magic (expected " + std::string(magic) + ")");
  const std::uint64_t hlen = get_u64(bytes, 8);
  if (hlen > bytes.size() - 16 || bytes.size() - 16 - hlen < 8)
    throw FormatError("truncated blob header");
  Blob blob;
  try {
    blob.header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("blob header: ") + e.what());
  }
  const std::size_t at = 16 + hlen;
  const std::uint64_t n = get_u64(bytes, at);
  if (n > (bytes.size() - at - 8) / 8 || bytes.size() - at - 8 != n * 8)
    throw FormatError("blob payload length mismatch");
  blob.payload.resize(n);
  std::memcpy(blob.payload.data(), bytes.data() + at + 8, n * 8);
  return blob;
}

Blob read_blob(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_blob(ss.str(), magic);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

double PayloadReader::next() {
  if (pos_ >= data_.size()) throw FormatError("payload overrun");
  return data_[pos_++];
}

std::span<const double> PayloadReader::take(std::size_t n) {
  if (n > data_.size() - pos_) throw FormatError("payload overrun");
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

}  // namespace bioctx
