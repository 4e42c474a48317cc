#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cxai {

enum class ErrorCode {
  InvalidArgument,
  InvalidSchema,
  Io,
  MissingColumn,
  ParseError,
  EmptyDataset,
  DegenerateAttribute,
  UnknownLevel,
  DimensionMismatch,
  KTooLarge,
  EmptyInput,
  TooFewSamples,
  OutOfDomain,
  Diverged,
  NoDifference,
  ZeroWidthInterval,
  RemoteUnavailable,
  RemoteProtocol,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. The code is stable and is what the
/// CLI and the service map onto exit statuses and HTTP codes.
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

}  // namespace cxai
