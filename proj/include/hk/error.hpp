#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hk {

enum class ErrorKind {
  Parse,
  Validation,
  Conflict,
  Range,
  EvidenceMissing,
  Shape,
  Config,
  Lookup,
  State,
  Arity,
  Alignment,
  Transport,
  Degenerate,
  Dependency,
  Estimation,
  Io,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (and the CLI)
// can map it to a diagnostic without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace hk
