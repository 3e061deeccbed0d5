#pragma once

#include <stdexcept>
#include <string>

namespace tf {

// Error categories map onto CLI exit codes: usage=1, data=2, numeric=3.
enum class ErrorKind { usage = 1, data = 2, numeric = 3 };

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

  private:
    ErrorKind kind_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorKind::usage, msg); }
inline Error data_error(const std::string& msg) { return Error(ErrorKind::data, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorKind::numeric, msg); }

}  // namespace tf
