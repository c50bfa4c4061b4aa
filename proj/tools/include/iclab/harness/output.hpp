#pragma once

#include "iclab/harness/json.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace iclab::harness {

using Row = std::vector<std::string>;

/// Owns one run directory: the resolved config, every CSV written during the
/// run, and the manifest written at the end.
class RunOutput {
 public:
  explicit RunOutput(const Json& config);

  const std::filesystem::path& dir() const { return dir_; }
  const std::string& hash() const { return hash_; }

  /// Writes a CSV whose first line is the `# iclab ...` provenance comment.
  /// `meta` is appended to that comment as extra key=value pairs.
  void write_csv(const std::string& name, const std::vector<std::string>& header,
                 const std::vector<Row>& rows, const std::string& meta = "");

  /// Writes an arbitrary file and records it in the manifest.
  void write_text(const std::string& name, const std::string& text, std::int64_t rows = 0);

  /// Records a file produced elsewhere, e.g. a checkpoint.
  void record(const std::string& name, std::int64_t rows);

  /// Writes manifest.json atomically.
  void finish(const std::string& status);

 private:
  struct Entry {
    std::string file;
    std::int64_t rows;
  };

  Json config_;
  std::filesystem::path dir_;
  std::string hash_;
  std::string started_;
  std::vector<Entry> files_;
};

/// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

std::string utc_timestamp();

}  // namespace iclab::harness
