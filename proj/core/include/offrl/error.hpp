#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace offrl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (wrong dimensions, bad enum, ...).
struct ContractError : Error {
  using Error::Error;
};

/// A value or container violates one of its structural invariants.
struct InvariantError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// On-disk payload does not agree with its manifest.
struct CorruptionError : Error {
  using Error::Error;
};

struct VersionError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

/// Transport failure after all retries were exhausted.
struct TransportError : Error {
  using Error::Error;
};

/// HTTP failure that retrying will not fix (4xx other than 429).
struct NonRetryableError : Error {
  NonRetryableError(int status, const std::string& what) : Error(what), status(status) {}
  int status;
};

struct NonFiniteLossError : Error {
  NonFiniteLossError(std::size_t index, const std::string& what)
      : Error(what), batch_index(index) {}
  std::size_t batch_index;
};

/// A pipeline stage failed; `stage` names it.
struct StageError : Error {
  StageError(std::string stage_name, const std::string& what)
      : Error("stage '" + stage_name + "' failed: " + what), stage(std::move(stage_name)) {}
  std::string stage;
};

}  // namespace offrl
