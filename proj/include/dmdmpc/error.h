// Copyright 2026 The DMD-MPC Authors
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

#ifndef DMDMPC_ERROR_H_
#define DMDMPC_ERROR_H_

#include <stdexcept>
#include <string>

namespace dmdmpc {

enum class ErrorCode {
  kInvalidArgument = 1,
  kShapeMismatch,
  kNotPositiveDefinite,
  kDegenerateEstimate,
  kInfeasibleStep,
  kUnsupported,
  kParse,
  kIo,
};

// All library failures are reported as Error with a category code. The C API
// maps the code onto its status enum.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void Require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) Fail(code, what);
}

}  // namespace dmdmpc

#endif  // DMDMPC_ERROR_H_
