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

#ifndef MVR_ERROR_H_
#define MVR_ERROR_H_

#include <stdexcept>
#include <string>

namespace mvr {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A vector whose norm is too small to normalize.
class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones were required (NaN loss, inf gradient).
class NumericError : public Error {
 public:
  using Error::Error;
};

// A sequence without a single valid item where one is required.
class EmptySequenceError : public Error {
 public:
  using Error::Error;
};

class UnknownTopicError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Corrupt, truncated or version-mismatched files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class DegenerateImportanceError : public Error {
 public:
  using Error::Error;
};

// Metric requested on input where it is not defined (K<2, empty corpus).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvr

#endif  // MVR_ERROR_H_
