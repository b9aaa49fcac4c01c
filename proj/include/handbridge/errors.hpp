// Copyright 2026 The Handbridge Authors.
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

#include <stdexcept>
#include <string>
#include <string_view>

namespace handbridge {

enum class ErrorCode {
  // geometry
  DegenerateFit,
  ParallelAxes,
  // input data
  ParseError,
  EmptyTrack,
  NonMonotonicTime,
  TooManyGaps,
  DegenerateCalibration,
  InvalidMatrix,
  BehindCamera,
  EmptyMesh,
  MissingTopology,
  ViewMismatch,
  EmptySet,
  EmptyEmbodiment,
  // storage
  VersionMismatch,
  ChecksumMismatch,
  IoError,
  // pipeline
  ConfigError,
  ValidationFailure,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::ParallelAxes: return "ParallelAxes";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::TooManyGaps: return "TooManyGaps";
    case ErrorCode::DegenerateCalibration: return "DegenerateCalibration";
    case ErrorCode::InvalidMatrix: return "InvalidMatrix";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::EmptyMesh: return "EmptyMesh";
    case ErrorCode::MissingTopology: return "MissingTopology";
    case ErrorCode::ViewMismatch: return "ViewMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::EmptyEmbodiment: return "EmptyEmbodiment";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ValidationFailure: return "ValidationFailure";
  }
  return "Unknown";
}

/// Single exception type for the library. The code identifies the failure
/// class; the message carries file/frame context.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Process exit codes used by the command line tool.
enum class ExitCode : int {
  Ok = 0,
  ConfigError = 2,
  InputDataError = 3,
  ValidationFailure = 4,
};

inline ExitCode exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::MissingTopology:
      return ExitCode::ConfigError;
    case ErrorCode::ValidationFailure:
    case ErrorCode::VersionMismatch:
    case ErrorCode::ChecksumMismatch:
      return ExitCode::ValidationFailure;
    default:
      return ExitCode::InputDataError;
  }
}

}  // namespace handbridge
