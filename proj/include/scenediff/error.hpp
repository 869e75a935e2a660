#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scenediff {

enum class ErrorCode {
  MissingFile,
  ShapeMismatch,
  InvalidPose,
  InvalidIntrinsics,
  FeatureDimMismatch,
  MalformedInput,
  IoError,
  EmptyGeometry,
  NoDstRegions,
  DegenerateDistribution,
  SceneMismatch,
  EmptyMask,
  InvalidSpec,
  InvalidConfig,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidPose: return "InvalidPose";
    case ErrorCode::InvalidIntrinsics: return "InvalidIntrinsics";
    case ErrorCode::FeatureDimMismatch: return "FeatureDimMismatch";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EmptyGeometry: return "EmptyGeometry";
    case ErrorCode::NoDstRegions: return "NoDstRegions";
    case ErrorCode::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::SceneMismatch: return "SceneMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

// Every failure surfaced by the library carries a typed code. what() is
// formatted as "<Code>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace scenediff
