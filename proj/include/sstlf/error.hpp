#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sstlf {

enum class ErrorKind {
  kMissingView,
  kDimensionMismatch,
  kBadManifest,
  kBadViewIndex,
  kBadImage,
  kEmptyAperture,
  kNoForegroundPixels,
  kDegenerateRange,
  kGridTooSmall,
  kUnfillableRow,
  kEmptyRegion,
  kMissingMaps,
  kZeroWeightSum,
  kBadSpec,
  kBadConfig,
  kInvalidArgument,
  kIo,
};

std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-checkable kind alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMissingView: return "MissingView";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kBadManifest: return "BadManifest";
    case ErrorKind::kBadViewIndex: return "BadViewIndex";
    case ErrorKind::kBadImage: return "BadImage";
    case ErrorKind::kEmptyAperture: return "EmptyAperture";
    case ErrorKind::kNoForegroundPixels: return "NoForegroundPixels";
    case ErrorKind::kDegenerateRange: return "DegenerateRange";
    case ErrorKind::kGridTooSmall: return "GridTooSmall";
    case ErrorKind::kUnfillableRow: return "UnfillableRow";
    case ErrorKind::kEmptyRegion: return "EmptyRegion";
    case ErrorKind::kMissingMaps: return "MissingMaps";
    case ErrorKind::kZeroWeightSum: return "ZeroWeightSum";
    case ErrorKind::kBadSpec: return "BadSpec";
    case ErrorKind::kBadConfig: return "BadConfig";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace sstlf
