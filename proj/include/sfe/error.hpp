#pragma once

#include <stdexcept>
#include <string>

namespace sfe {

// Category decides the CLI exit code: usage/contract problems exit 2,
// runtime and numeric failures exit 1.
enum class ErrorKind { usage, data, numeric, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return {ErrorKind::usage, what}; }
inline Error data_error(const std::string& what) { return {ErrorKind::data, what}; }
inline Error numeric_error(const std::string& what) { return {ErrorKind::numeric, what}; }
inline Error io_error(const std::string& what) { return {ErrorKind::io, what}; }

}  // namespace sfe
