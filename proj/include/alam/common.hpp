#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace alam {

// Exit codes used by every CLI subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitNumerical = 3,
};

// Bad configuration, malformed inputs, contract violations at the API edge.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values showing up where the math promises finite ones.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

}  // namespace alam
