#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace trim3d {

enum class ErrorCode {
  // configuration
  NonPositiveDim,
  KernelLargerThanPaddedIfmap,
  StrideIndivisible,
  UnsupportedStrideForSim,
  InvalidArch,
  PlanMismatch,
  // tensors
  ShapeMismatch,
  ChannelCountMismatch,
  OutOfBounds,
  // slice
  BusyError,
  MissingInput,
  ArityMismatch,
  // input recycling buffer
  NotConfigured,
  IfmapTooWide,
  IfmapTooNarrow,
  Underflow,
  WrongPhase,
  ModeChangeMidLayer,
  CapacityExceeded,
  ShadowOverwrite,
  // orchestration
  LaneDesync,
  ScheduleViolation,
  // analytics
  UnsupportedMode,
  ModelMismatch,
  // front end
  UsageError,
  ConflictingFlags,
  RangeError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDim: return "NonPositiveDim";
    case ErrorCode::KernelLargerThanPaddedIfmap: return "KernelLargerThanPaddedIfmap";
    case ErrorCode::StrideIndivisible: return "StrideIndivisible";
    case ErrorCode::UnsupportedStrideForSim: return "UnsupportedStrideForSim";
    case ErrorCode::InvalidArch: return "InvalidArch";
    case ErrorCode::PlanMismatch: return "PlanMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ChannelCountMismatch: return "ChannelCountMismatch";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::BusyError: return "BusyError";
    case ErrorCode::MissingInput: return "MissingInput";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::NotConfigured: return "NotConfigured";
    case ErrorCode::IfmapTooWide: return "IfmapTooWide";
    case ErrorCode::IfmapTooNarrow: return "IfmapTooNarrow";
    case ErrorCode::Underflow: return "Underflow";
    case ErrorCode::WrongPhase: return "WrongPhase";
    case ErrorCode::ModeChangeMidLayer: return "ModeChangeMidLayer";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::ShadowOverwrite: return "ShadowOverwrite";
    case ErrorCode::LaneDesync: return "LaneDesync";
    case ErrorCode::ScheduleViolation: return "ScheduleViolation";
    case ErrorCode::UnsupportedMode: return "UnsupportedMode";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::ConflictingFlags: return "ConflictingFlags";
    case ErrorCode::RangeError: return "RangeError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this exception; `code()`
/// identifies the condition so callers and tests can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace trim3d
