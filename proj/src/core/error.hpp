// Copyright 2026 The anicl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace anicl {

// Keep in sync with the anicl_status values in include/anicl/anicl.h.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kDegenerateInput = 2,
  kEnvelopeTooLoose = 3,
  kConstructionFailed = 4,
  kSingularLayer = 5,
  kNumericOverflow = 6,
  kMissingGradient = 7,
  kInsufficientData = 8,
  kConfigParse = 9,
  kIo = 10,
  kInternal = 99,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void throw_error(ErrorCode code, const std::string& msg) {
  throw Error(code, msg);
}

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) throw_error(code, msg);
}

inline void require_arg(bool cond, const std::string& msg) {
  require(cond, ErrorCode::kInvalidArgument, msg);
}

}  // namespace anicl
