#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mimor {

enum class Errc {
  invalid_argument,
  parse,
  duplicate,
  dimension,
  not_found,
  io,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::parse: return "parse";
    case Errc::duplicate: return "duplicate";
    case Errc::dimension: return "dimension";
    case Errc::not_found: return "not_found";
    case Errc::io: return "io";
  }
  return "unknown";
}

/// Every failure in the library surfaces as this exception; `code()` lets
/// callers (the HTTP layer in particular) map it onto a response class.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(Errc::invalid_argument, message);
}

}  // namespace mimor
