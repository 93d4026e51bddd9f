#pragma once

#include <stdexcept>
#include <string>

namespace pyrseg {

// Every failure carries a short machine-parsable class name, printed by the
// CLI as `error: <class>: <message>`.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error("shape", w) {}
};
struct ContractError : Error {
  explicit ContractError(const std::string& w) : Error("contract", w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config", w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format", w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error("io", w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error("numeric", w) {}
};

}  // namespace pyrseg
