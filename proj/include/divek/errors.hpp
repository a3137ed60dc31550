#pragma once

#include <stdexcept>
#include <string>

namespace divek {

// Bad configuration, missing fixture data, or inconsistent inputs. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Backend unreachable or failing after all retries. CLI exit code 3.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace divek
