#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace kserver {

// Every precondition failure carries a stable code (e.g. "RatioViolation")
// plus a human-readable detail string.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace kserver
