#include "fedcof/error.hpp"

#include <utility>

namespace fedcof {

Error::Error(std::string code, const std::string& message)
    : std::runtime_error(message), code_(std::move(code)) {}

void fail(std::string code, const std::string& message) {
  throw Error(std::move(code), message);
}

}  // namespace fedcof
