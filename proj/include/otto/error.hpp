#pragma once

#include <stdexcept>
#include <string>

namespace otto {

// Failure classes map onto CLI exit codes: config 2, numeric 3, invariant 4.
enum class ErrorClass { config, numeric, invariant };

class Error : public std::runtime_error {
 public:
  Error(std::string code, ErrorClass cls, const std::string& what)
      : std::runtime_error(code + ": " + what), code_(std::move(code)), cls_(cls) {}

  const std::string& code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  std::string code_;
  ErrorClass cls_;
};

[[noreturn]] inline void raise_numeric(const std::string& code, const std::string& what) {
  throw Error(code, ErrorClass::numeric, what);
}

[[noreturn]] inline void raise_config(const std::string& code, const std::string& what) {
  throw Error(code, ErrorClass::config, what);
}

inline int exit_code_for(ErrorClass cls) {
  switch (cls) {
    case ErrorClass::config: return 2;
    case ErrorClass::numeric: return 3;
    case ErrorClass::invariant: return 4;
  }
  return 1;
}

}  // namespace otto
