#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bnsens {

// Base of everything the engine throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A well-formed request that the model cannot answer: zero-probability
// evidence, an edit to a frozen parameter, an unknown variable name, ...
// The CLI maps these to exit code 1 and the service to HTTP 422.
class DomainError : public Error {
 public:
  DomainError(std::string reason, const std::string& message)
      : Error(message), reason_(std::move(reason)) {}

  // Short machine-readable tag, e.g. "zero-probability-evidence".
  const std::string& reason() const { return reason_; }

 private:
  std::string reason_;
};

class LookupError : public DomainError {
 public:
  explicit LookupError(const std::string& message) : DomainError("unknown-entity", message) {}
};

class ZeroProbabilityEvidence : public DomainError {
 public:
  explicit ZeroProbabilityEvidence(const std::string& message)
      : DomainError("zero-probability-evidence", message) {}
};

class FrozenParameter : public DomainError {
 public:
  explicit FrozenParameter(const std::string& message) : DomainError("frozen parameter", message) {}
};

class InvalidNetwork : public DomainError {
 public:
  explicit InvalidNetwork(std::vector<std::string> violations)
      : DomainError("invalid-network", join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid network:";
    for (const auto& s : v) out += "\n  " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

}  // namespace bnsens
