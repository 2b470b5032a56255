// Copyright 2026 The ssd3d Authors
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

#ifndef SSD3D__ERROR_HPP_
#define SSD3D__ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace ssd3d
{

enum class ErrorCode {
  NonPositiveDepth,
  BehindCamera,
  CalibrationInvalid,
  OutOfRange,
  TemplateCountMismatch,
  Overflow,
  ShapeMismatch,
  NonFiniteActivation,
  DivergenceDetected,
  ParseError,
  SizeMismatch,
  EmptyDataset,
  InsufficientData,
  InvalidArgument,
  IoError,
};

inline std::string_view to_string(ErrorCode code)
{
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::CalibrationInvalid: return "CalibrationInvalid";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::TemplateCountMismatch: return "TemplateCountMismatch";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, const std::string & what)
  : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
  {
  }

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace ssd3d

#endif  // SSD3D__ERROR_HPP_
