/*
 * Copyright 2026 The finecf Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FINECF_ERRORS_H_
#define FINECF_ERRORS_H_

#include <stdexcept>
#include <string>

namespace finecf {

// Base class of every error raised by the toolkit. The CLI maps any Error to
// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed arguments: shape mismatches, out-of-range indices, bad sizes.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Unsupported or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing or unreadable files.
class IoError : public Error {
 public:
  using Error::Error;
};

// The data cannot satisfy a request (e.g. too few correct samples).
class DataError : public Error {
 public:
  using Error::Error;
};

// Every grid location has already been replaced.
class ExhaustionError : public Error {
 public:
  using Error::Error;
};

}  // namespace finecf

#endif  // FINECF_ERRORS_H_
