// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace geoquery {

/// Base of every error raised by the library. `code()` is the stable
/// identifier surfaced in service error bodies and CLI diagnostics.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define GEOQUERY_DEFINE_ERROR(Name)                                       \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

GEOQUERY_DEFINE_ERROR(InputError);
GEOQUERY_DEFINE_ERROR(RangeError);
GEOQUERY_DEFINE_ERROR(DimensionError);
GEOQUERY_DEFINE_ERROR(DegenerateVectorError);
GEOQUERY_DEFINE_ERROR(DegenerateInputError);
GEOQUERY_DEFINE_ERROR(DuplicateKeyError);
GEOQUERY_DEFINE_ERROR(VersionError);
GEOQUERY_DEFINE_ERROR(ProviderUnavailable);
GEOQUERY_DEFINE_ERROR(MissingDescriptionError);
GEOQUERY_DEFINE_ERROR(NotReadyError);
GEOQUERY_DEFINE_ERROR(NotFoundError);
GEOQUERY_DEFINE_ERROR(ConfigError);
GEOQUERY_DEFINE_ERROR(EmptyResultError);
GEOQUERY_DEFINE_ERROR(AllCandidatesFailed);

#undef GEOQUERY_DEFINE_ERROR

/// Malformed persisted or streamed data. `offset` is a byte offset for
/// binary files, a 1-based line or record ordinal for text formats.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::optional<std::uint64_t> offset = std::nullopt)
      : Error("FormatError", offset ? message + " (at " + std::to_string(*offset) + ")" : message),
        offset_(offset) {}

  std::optional<std::uint64_t> offset() const noexcept { return offset_; }

 private:
  std::optional<std::uint64_t> offset_;
};

}  // namespace geoquery
