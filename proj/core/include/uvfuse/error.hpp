#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace uvfuse {

/// Thrown when an input violates a documented precondition or invariant.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-fatal condition reported alongside a result (isolated vertex,
/// degenerate face, excluded landmark, ...). `index` is -1 when the
/// condition is not tied to a single element.
struct Diagnostic {
  std::string code;
  long index = -1;
  std::string message;
};

using Diagnostics = std::vector<Diagnostic>;

}  // namespace uvfuse
