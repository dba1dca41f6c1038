#pragma once

#include <stdexcept>
#include <string>

namespace qdres {

enum class ErrorKind {
  InvalidArgument,
  IllConditioned,
  CNormBreakdown,
  NoBoundState,
  DegenerateDifference,
  FitDiverged,
  NoPeak,
  AllFitsFailed,
  NoStationaryPoint,
  BasisMismatch,
  PeakCountMismatch,
  AnchorInsideResonance,
  ConventionMismatch,
  UnknownFigure,
  CacheFormat,
  Io,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::CNormBreakdown: return "CNormBreakdown";
    case ErrorKind::NoBoundState: return "NoBoundState";
    case ErrorKind::DegenerateDifference: return "DegenerateDifference";
    case ErrorKind::FitDiverged: return "FitDiverged";
    case ErrorKind::NoPeak: return "NoPeak";
    case ErrorKind::AllFitsFailed: return "AllFitsFailed";
    case ErrorKind::NoStationaryPoint: return "NoStationaryPoint";
    case ErrorKind::BasisMismatch: return "BasisMismatch";
    case ErrorKind::PeakCountMismatch: return "PeakCountMismatch";
    case ErrorKind::AnchorInsideResonance: return "AnchorInsideResonance";
    case ErrorKind::ConventionMismatch: return "ConventionMismatch";
    case ErrorKind::UnknownFigure: return "UnknownFigure";
    case ErrorKind::CacheFormat: return "CacheFormat";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Library-wide exception. `kind()` lets callers branch on the failure
/// class without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace qdres
