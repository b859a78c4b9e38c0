#ifndef MAGSHELL_ERRORS_HPP
#define MAGSHELL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace magshell {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

struct UnsupportedSystem : Error {
  explicit UnsupportedSystem(const std::string& what) : Error(what) {}
};

struct InvalidForm : Error {
  explicit InvalidForm(const std::string& what) : Error(what) {}
};

struct PreconditionFailed : Error {
  explicit PreconditionFailed(const std::string& what) : Error(what) {}
};

// Requested energy level admits no stabilizing 1-form of the built-in shape.
struct NotStable : Error {
  explicit NotStable(const std::string& what) : Error(what) {}
};

struct NoConvergence : Error {
  explicit NoConvergence(const std::string& what) : Error(what) {}
};

struct EscapedShell : Error {
  explicit EscapedShell(const std::string& what) : Error(what) {}
};

struct IntegrationFailure : Error {
  explicit IntegrationFailure(const std::string& what) : Error(what) {}
};

}  // namespace magshell

#endif
