// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skiptrace {

// Every failure the library can raise. Each code maps to exactly one process
// exit status (see exit_code()).
enum class ErrorCode {
  Usage,
  Io,
  MalformedTrace,
  MissingField,
  EmptyTrace,
  NoKernels,
  NoRoots,
  ClockSkew,
  EmptyInput,
  TooFewPoints,
  NonPositiveEpsilon,
  InvalidSeries,
  BadLength,
  BadThreshold,
  DegenerateEager,
  InvalidSpec,
  MalformedManifest,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

std::string_view to_string(ErrorCode code) noexcept;

// Process exit status for an error code. 0 is success, 1 is reserved for
// unexpected internal failures.
int exit_code(ErrorCode code) noexcept;

}  // namespace skiptrace
