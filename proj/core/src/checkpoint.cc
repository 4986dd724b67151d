// Copyright 2026 The MVR Authors.
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

#include "mvr/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "mvr/error.h"

namespace mvr {
namespace binio {
namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>(v >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  get_bytes(in, reinterpret_cast<char*>(buf), sizeof(T));
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= T(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void put_f64(std::ostream& out, double v) {
  put_le(out, std::bit_cast<std::uint64_t>(v));
}

void get_bytes(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError("unexpected end of file");
  }
}

std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t get_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
double get_f64(std::istream& in) {
  return std::bit_cast<double>(get_le<std::uint64_t>(in));
}

}  // namespace binio

namespace {
constexpr char kMagic[4] = {'M', 'V', 'R', '1'};
// Guards against absurd allocations from corrupt headers.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;
}  // namespace

void write_checkpoint(const ParamStore& params, std::ostream& out) {
  out.write(kMagic, 4);
  binio::put_u32(out, kCheckpointVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(params.values().size()));
  for (const auto& [name, t] : params.values()) {
    binio::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  for (const auto& [name, t] : params.values()) {
    binio::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) binio::put_u64(out, d);
    for (double v : t.data()) binio::put_f64(out, v);
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

void save_checkpoint(const ParamStore& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  write_checkpoint(params, out);
}

ParamStore read_checkpoint(std::istream& in) {
  char magic[4];
  binio::get_bytes(in, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const std::uint32_t version = binio::get_u32(in);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) +
                      " unsupported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t count = binio::get_u32(in);
  std::vector<std::string> names(count);
  for (auto& name : names) {
    const std::uint32_t len = binio::get_u32(in);
    if (len > 4096) throw FormatError("implausible parameter name length");
    name.resize(len);
    binio::get_bytes(in, name.data(), len);
  }
  ParamStore params;
  for (const auto& name : names) {
    const std::uint32_t ndim = binio::get_u32(in);
    if (ndim > 8) throw FormatError("implausible tensor rank");
    std::vector<std::size_t> shape(ndim);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = binio::get_u64(in);
      n *= d;
      if (n > kMaxElements) throw FormatError("implausible tensor size");
    }
    std::vector<double> data(n);
    for (double& v : data) v = binio::get_f64(in);
    params.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return params;
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

}  // namespace mvr
