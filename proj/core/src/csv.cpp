#include "iclab/csv.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace iclab::csv {

std::string fmt(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string fmt(std::int64_t value) { return std::to_string(value); }

void Writer::comment(std::string_view text) { out_ << "# " << text << '\n'; }

void Writer::header(const std::vector<std::string>& columns) {
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << '\n';
}

void Writer::row(const std::vector<std::string>& fields) {
  header(fields);
  ++rows_;
}

}  // namespace iclab::csv
