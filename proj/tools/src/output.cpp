#include "iclab/harness/output.hpp"

#include "iclab/common.hpp"
#include "iclab/harness/config.hpp"

#include <ctime>
#include <fstream>
#include <sstream>

namespace iclab::harness {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorKind::io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, "cannot move " + tmp.string() + " into place: " + ec.message());
}

RunOutput::RunOutput(const Json& config)
    : config_(config),
      dir_(config.at("out_dir").get<std::string>()),
      hash_(config_hash(config)),
      started_(utc_timestamp()) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) fail(ErrorKind::io, "cannot create output directory " + dir_.string() + ": " + ec.message());
  write_file_atomic(dir_ / "resolved_config.json", config_.dump(2) + "\n");
}

void RunOutput::write_csv(const std::string& name, const std::vector<std::string>& header,
                          const std::vector<Row>& rows, const std::string& meta) {
  std::ostringstream out;
  out << "# iclab experiment=" << config_.at("experiment").get<std::string>()
      << " config_hash=" << hash_ << " master_seed=" << config_.at("master_seed").dump()
      << " scale=" << config_.at("scale").get<std::string>();
  if (!meta.empty()) out << ' ' << meta;
  out << '\n';
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const Row& r : rows) {
    if (r.size() != header.size())
      fail(ErrorKind::runtime, "row width does not match header in " + name);
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  }
  write_file_atomic(dir_ / name, out.str());
  record(name, static_cast<std::int64_t>(rows.size()));
}

void RunOutput::write_text(const std::string& name, const std::string& text, std::int64_t rows) {
  write_file_atomic(dir_ / name, text);
  record(name, rows);
}

void RunOutput::record(const std::string& name, std::int64_t rows) {
  for (auto& e : files_)
    if (e.file == name) {
      e.rows = rows;
      return;
    }
  files_.push_back({name, rows});
}

void RunOutput::finish(const std::string& status) {
  Json outputs = Json::array();
  for (const auto& e : files_) outputs.push_back({{"file", e.file}, {"rows", e.rows}});
  const Json manifest{{"experiment", config_.at("experiment")},
                      {"config_hash", hash_},
                      {"tool_version", kVersion},
                      {"started_at", started_},
                      {"finished_at", utc_timestamp()},
                      {"status", status},
                      {"outputs", outputs}};
  write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace iclab::harness
