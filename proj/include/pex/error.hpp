#pragma once

#include <stdexcept>
#include <string>

namespace pex {

enum class ErrorKind {
  Contract,       // precondition / dimension violations
  Input,          // bad user-supplied data
  Parse,          // malformed files or responses
  Config,         // bad configuration
  Transport,      // backend unreachable (retryable)
  Protocol,       // backend reachable but response malformed
  Extraction,     // concept extraction failed
  Realization,    // predicate-to-feature mapping failed
  Numerical,      // singular systems and friends
  Budget,         // enumeration or sampling budget exceeded
  Unsupported,    // metric not available for this backend
  Template,       // prompt template problems
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  bool retryable() const { return kind_ == ErrorKind::Transport; }

private:
  ErrorKind kind_;
};

struct ContractError : Error {
  explicit ContractError(const std::string& m) : Error(ErrorKind::Contract, m) {}
};
struct InputError : Error {
  explicit InputError(const std::string& m) : Error(ErrorKind::Input, m) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error(ErrorKind::Parse, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::Config, m) {}
};
struct TransportError : Error {
  explicit TransportError(const std::string& m) : Error(ErrorKind::Transport, m) {}
};
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& m) : Error(ErrorKind::Protocol, m) {}
};
struct ExtractionError : Error {
  explicit ExtractionError(const std::string& m) : Error(ErrorKind::Extraction, m) {}
};
struct RealizationError : Error {
  explicit RealizationError(const std::string& m) : Error(ErrorKind::Realization, m) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& m) : Error(ErrorKind::Numerical, m) {}
};
struct BudgetError : Error {
  explicit BudgetError(const std::string& m) : Error(ErrorKind::Budget, m) {}
};
struct UnsupportedError : Error {
  explicit UnsupportedError(const std::string& m) : Error(ErrorKind::Unsupported, m) {}
};
struct TemplateError : Error {
  explicit TemplateError(const std::string& m) : Error(ErrorKind::Template, m) {}
};

}  // namespace pex
