#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nextmin {

enum class ErrorCode {
  invalid_argument,
  validation,
  not_found,
  io,
  corrupt,
  version_mismatch,
  catalog_mismatch,
  numeric,
  state,
  end_of_case,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library; the code lets callers (CLI, HTTP
/// layer) map failures without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace nextmin
