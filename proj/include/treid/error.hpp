/* Copyright 2026 The TReID Authors. All Rights Reserved.

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
#ifndef TREID_ERROR_HPP_
#define TREID_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace treid {

// Base class for all treid errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape / dimension mismatches between tensors or layers.
struct DimError : Error {
  using Error::Error;
};

// Violated API preconditions (non-scalar loss, label out of range, ...).
struct ContractError : Error {
  using Error::Error;
};

// Non-finite values, zero norms, and other numeric failures.
struct NumericError : Error {
  using Error::Error;
};

// Malformed on-disk data (bad magic, truncated payload, ...).
struct FormatError : Error {
  using Error::Error;
};

// Evaluation protocol violations (probe without gallery match, ...).
struct ProtocolError : Error {
  using Error::Error;
};

// Bad run configuration (unknown keys, out-of-range values, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace treid

#endif  // TREID_ERROR_HPP_
