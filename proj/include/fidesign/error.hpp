#pragma once

#include <stdexcept>
#include <string>

namespace fidesign {

// Error categories map onto CLI exit codes (see tools/fidesign.cpp).
enum class ErrorKind {
  Schema,     // malformed config or input file
  Budget,     // size guard refused the computation
  Numerical,  // impossible observation, annihilated posterior, non-finite value
  Index,      // argument outside its range
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error schema_error(const std::string& what) { return Error(ErrorKind::Schema, what); }
inline Error budget_error(const std::string& what) { return Error(ErrorKind::Budget, what); }
inline Error numerical_error(const std::string& what) { return Error(ErrorKind::Numerical, what); }
inline Error index_error(const std::string& what) { return Error(ErrorKind::Index, what); }

}  // namespace fidesign
