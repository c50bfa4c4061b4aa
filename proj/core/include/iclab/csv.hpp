#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace iclab::csv {

/// Shortest-safe text for a double: 17 significant digits, "inf"/"-inf"/"nan"
/// for non-finite values.
std::string fmt(double value);

std::string fmt(std::int64_t value);
inline std::string fmt(int value) { return fmt(static_cast<std::int64_t>(value)); }

/// Row writer that joins fields with commas and counts data rows.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  /// `# key=value ...` comment line. Not counted as a row.
  void comment(std::string_view text);
  void header(const std::vector<std::string>& columns);
  void row(const std::vector<std::string>& fields);

  std::int64_t rows() const { return rows_; }

 private:
  std::ostream& out_;
  std::int64_t rows_ = 0;
};

}  // namespace iclab::csv
