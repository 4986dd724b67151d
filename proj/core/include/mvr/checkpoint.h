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

// Binary parameter checkpoints.
//
// Layout, all integers little-endian:
//   "MVR1" | u32 version | u32 count
//   count x (u32 name length | name bytes)
//   count x (u32 ndim | ndim x u64 dim | prod(dims) x f64 value)
// Tensors appear in name-table order. Round trips are bit-exact.

#ifndef MVR_CHECKPOINT_H_
#define MVR_CHECKPOINT_H_

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "mvr/autodiff.h"

namespace mvr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const ParamStore& params, std::ostream& out);
void save_checkpoint(const ParamStore& params, const std::string& path);

// Throws FormatError on a bad magic, unknown version or truncation.
ParamStore read_checkpoint(std::istream& in);
ParamStore load_checkpoint(const std::string& path);

namespace binio {

void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f64(std::ostream& out, double v);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
double get_f64(std::istream& in);
void get_bytes(std::istream& in, char* dst, std::size_t n);

}  // namespace binio
}  // namespace mvr

#endif  // MVR_CHECKPOINT_H_
