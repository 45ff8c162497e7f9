/*
 * Copyright 2026 the secrel authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SECREL_COMMON_HPP_
#define SECREL_COMMON_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace secrel {

enum class ErrorCode {
  kParseError,
  kUnknownParty,
  kUnknownNode,
  kUnknownColumn,
  kDuplicateColumn,
  kCycleDetected,
  kArityMismatch,
  kNoOutput,
  kConsentRequired,
  kUnsupportedUnderMpc,
  kIllegalBoundary,
  kUnauthorizedReveal,
  kDivisionByZero,
  kMissingColumn,
  kMissingInput,
  kShapeMismatch,
  kMismatch,
  kInternal,
};

const char* error_code_name(ErrorCode code);

// All validation, compilation and execution failures share this type so the
// CLI and bindings can map them to exit codes uniformly.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace secrel

#endif  // SECREL_COMMON_HPP_
