#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace warpgeo {

// Stable error codes. The numeric values are part of the CLI contract and
// must not be renumbered.
enum class ErrorCode {
  LexError = 101,
  ParseError = 102,
  UnknownVariable = 103,
  UnknownFunction = 104,
  ArityMismatch = 105,
  UnboundVariable = 106,
  DomainError = 201,
  OutsideDomain = 202,
  NotPositiveDefinite = 203,
  DimensionMismatch = 204,
  NameCollision = 205,
  InvalidArgument = 206,
  NotOrthogonal = 207,
  NotPureLift = 208,
  CaseMismatch = 209,
  AmbiguousRank = 210,
  NoHorizontalSpace = 211,
  NotCoordinateAligned = 212,
  NotConformal = 213,
  ZeroVelocity = 214,
  FileError = 301,
  SpecSyntax = 302,
  SpecSemantic = 303,
  UndefinedName = 304,
  DuplicateName = 305,
};

std::string_view error_code_name(ErrorCode code);

// Character range [begin, end) into the source text of an expression.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  Error(ErrorCode code, const std::string& message, Span span)
      : std::runtime_error(message), code_(code), span_(span), has_span_(true) {}

  ErrorCode code() const noexcept { return code_; }
  bool has_span() const noexcept { return has_span_; }
  Span span() const noexcept { return span_; }

 private:
  ErrorCode code_;
  Span span_{};
  bool has_span_ = false;
};

}  // namespace warpgeo
