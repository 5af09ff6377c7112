#pragma once

#include <stdexcept>
#include <string>

namespace nepner {

// Failure classes. The CLI maps these onto distinct exit codes.
enum class ErrorKind {
  kConfig,
  kIo,
  kData,     // malformed corpus / embedding / fixture content
  kInvalid,  // contract violation on an in-memory value
  kBackend,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& m) { return Error(ErrorKind::kConfig, m); }
inline Error io_error(const std::string& m) { return Error(ErrorKind::kIo, m); }
inline Error data_error(const std::string& m) { return Error(ErrorKind::kData, m); }
inline Error invalid_argument(const std::string& m) { return Error(ErrorKind::kInvalid, m); }

}  // namespace nepner
