#ifndef DIGITNET_ERROR_HPP
#define DIGITNET_ERROR_HPP

#include <stdexcept>
#include <string>

namespace digitnet {

// Coarse failure categories; they map onto the CLI exit codes and the
// C API status values (user=2, format=3, internal=4).
enum class ErrorCategory { user = 2, format = 3, internal = 4 };

class Error : public std::runtime_error {
public:
  Error(ErrorCategory cat, const std::string& what)
      : std::runtime_error(what), cat_(cat) {}
  ErrorCategory category() const noexcept { return cat_; }

private:
  ErrorCategory cat_;
};

/// Tensor shapes that do not compose; reaching user code means an
/// internal invariant broke (config-level mismatches are caught up front).
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& w) : Error(ErrorCategory::internal, w) {}
};

/// A value outside an operation's domain (empty tensor, label > 9, ...).
class DomainError : public Error {
public:
  explicit DomainError(const std::string& w) : Error(ErrorCategory::user, w) {}
};

/// Malformed bytes in an external file (IDX data, checkpoints).
class FormatError : public Error {
public:
  explicit FormatError(const std::string& w) : Error(ErrorCategory::format, w) {}
};

/// Invalid configuration supplied by the caller.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& w) : Error(ErrorCategory::user, w) {}
};

/// Filesystem failure; the message carries the offending path.
class IoError : public Error {
public:
  explicit IoError(const std::string& w) : Error(ErrorCategory::user, w) {}
};

}  // namespace digitnet

#endif
