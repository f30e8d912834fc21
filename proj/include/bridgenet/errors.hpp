/* Copyright 2026 The BridgeNet Kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef BRIDGENET_ERRORS_HPP_
#define BRIDGENET_ERRORS_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bridgenet {

/// Root of every error the kit raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument lies outside its mathematical domain (tau <= 0, alpha > 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a precondition that is not a shape or domain issue.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a tensor.
class NumericError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Invalid network, bridge, schedule or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A knowledge bridge refers to a tap that is missing or has the wrong width.
class BridgeConfigError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Training diverged or otherwise failed mid-run.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (open, read, write).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed corpus or checkpoint bytes.
class FormatError : public IoError {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : IoError(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Checkpoint written for a different configuration or file version.
class IncompatibleCheckpointError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace bridgenet

#endif  // BRIDGENET_ERRORS_HPP_
