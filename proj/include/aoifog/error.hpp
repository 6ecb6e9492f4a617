#pragma once

#include <stdexcept>
#include <string>

namespace aoifog {

// Usage errors are bad arguments or configuration; data errors come from
// malformed inputs or infeasible data (the CLI maps them to exit 1 / exit 2).
enum class ErrorKind { usage, data };

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ErrorKind kind = ErrorKind::data)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace aoifog
