#pragma once

#include <stdexcept>
#include <string>

namespace fedcof {

/// Library exception. `code()` is a short stable identifier (e.g. "bad_magic",
/// "insufficient_means") so the CLI can print machine-parseable errors.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message);

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] void fail(std::string code, const std::string& message);

}  // namespace fedcof
