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

#include "secrel/common.hpp"

namespace secrel {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kUnknownParty: return "UnknownParty";
    case ErrorCode::kUnknownNode: return "UnknownNode";
    case ErrorCode::kUnknownColumn: return "UnknownColumn";
    case ErrorCode::kDuplicateColumn: return "DuplicateColumn";
    case ErrorCode::kCycleDetected: return "CycleDetected";
    case ErrorCode::kArityMismatch: return "ArityMismatch";
    case ErrorCode::kNoOutput: return "NoOutput";
    case ErrorCode::kConsentRequired: return "ConsentRequired";
    case ErrorCode::kUnsupportedUnderMpc: return "UnsupportedUnderMpc";
    case ErrorCode::kIllegalBoundary: return "IllegalBoundary";
    case ErrorCode::kUnauthorizedReveal: return "UnauthorizedReveal";
    case ErrorCode::kDivisionByZero: return "DivisionByZero";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kMissingInput: return "MissingInput";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kMismatch: return "Mismatch";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

}  // namespace secrel
