/*
 * Copyright 2026 The fbloop Authors.
 *
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
#pragma once

#include <stdexcept>
#include <string>

namespace fbloop {

// Coarse error categories. The C API maps these onto status codes and the
// CLI maps them onto exit codes (validation -> 1, everything else -> 2).
enum class ErrorKind {
  kValidation,
  kDomain,
  kComputation,
  kIo,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error ValidationError(const std::string& what) {
  return Error(ErrorKind::kValidation, what);
}
inline Error DomainError(const std::string& what) {
  return Error(ErrorKind::kDomain, what);
}
inline Error ComputationError(const std::string& what) {
  return Error(ErrorKind::kComputation, what);
}
inline Error IoError(const std::string& what) {
  return Error(ErrorKind::kIo, what);
}

}  // namespace fbloop
