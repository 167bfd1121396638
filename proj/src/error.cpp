// SPDX-License-Identifier: Apache-2.0
#include "skiptrace/error.hpp"

namespace skiptrace {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Usage: return "Usage";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MalformedTrace: return "MalformedTrace";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::NoKernels: return "NoKernels";
    case ErrorCode::NoRoots: return "NoRoots";
    case ErrorCode::ClockSkew: return "ClockSkew";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::NonPositiveEpsilon: return "NonPositiveEpsilon";
    case ErrorCode::InvalidSeries: return "InvalidSeries";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::BadThreshold: return "BadThreshold";
    case ErrorCode::DegenerateEager: return "DegenerateEager";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::MalformedManifest: return "MalformedManifest";
  }
  return "Unknown";
}

int exit_code(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Usage: return 2;
    case ErrorCode::Io: return 3;
    case ErrorCode::MalformedTrace: return 4;
    case ErrorCode::MissingField: return 5;
    case ErrorCode::EmptyTrace: return 6;
    case ErrorCode::NoKernels: return 7;
    case ErrorCode::NoRoots: return 8;
    case ErrorCode::ClockSkew: return 9;
    case ErrorCode::EmptyInput: return 10;
    case ErrorCode::TooFewPoints: return 11;
    case ErrorCode::NonPositiveEpsilon: return 12;
    case ErrorCode::InvalidSeries: return 13;
    case ErrorCode::BadLength: return 14;
    case ErrorCode::BadThreshold: return 15;
    case ErrorCode::DegenerateEager: return 16;
    case ErrorCode::InvalidSpec: return 17;
    case ErrorCode::MalformedManifest: return 18;
  }
  return 1;
}

}  // namespace skiptrace
