#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace iclab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr const char* kVersion = "0.1.0";

enum class ErrorKind {
  config,      // malformed or inconsistent configuration
  dimension,   // shape mismatch between inputs
  numeric,     // non-finite values where finite ones are required
  diverged,    // training blew up
  degenerate,  // measure-zero input the operation cannot handle
  io,          // file could not be read or written
  runtime,     // anything else raised by an experiment
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

void require_dims(bool ok, const std::string& what);

/// Label of a nonzero score. Callers handle the zero case themselves.
inline double sign_label(double score) { return score > 0.0 ? 1.0 : -1.0; }

}  // namespace iclab
