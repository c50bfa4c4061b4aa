#include "iclab/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace iclab::tf {

namespace {

constexpr const char* kMagic = "iclab-checkpoint";

void write_matrix(std::ostream& out, const char* label, const Mat& m) {
  out << label << '\n';
  char buf[48];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%a", m(i, j));
      out << (j ? " " : "") << buf;
    }
    out << '\n';
  }
}

std::string next_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  if (!(in >> tok)) fail(ErrorKind::io, "truncated checkpoint " + path.string());
  return tok;
}

void expect(std::istream& in, const std::string& want, const std::filesystem::path& path) {
  const std::string got = next_token(in, path);
  if (got != want)
    fail(ErrorKind::io, "malformed checkpoint " + path.string() + ": expected '" + want +
                            "', found '" + got + "'");
}

long read_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = next_token(in, path);
  char* end = nullptr;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end == tok.c_str() || *end != '\0')
    fail(ErrorKind::io, "malformed integer '" + tok + "' in " + path.string());
  return v;
}

void read_matrix(std::istream& in, Mat& m, const std::filesystem::path& path) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const std::string tok = next_token(in, path);
      char* end = nullptr;
      m(i, j) = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0')
        fail(ErrorKind::io, "malformed number '" + tok + "' in " + path.string());
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TransformerParams& params) {
  params.validate();
  std::ostringstream out;
  out << kMagic << '\n'
      << "format_version " << kCheckpointFormatVersion << '\n'
      << "d " << params.dim() << '\n'
      << "L " << params.depth() << '\n';
  write_matrix(out, "w_e", params.w_e);
  for (const auto& layer : params.layers) {
    write_matrix(out, "p", layer.p);
    write_matrix(out, "q", layer.q);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) fail(ErrorKind::io, "cannot write checkpoint " + path.string());
  file << out.str();
  if (!file) fail(ErrorKind::io, "failed writing checkpoint " + path.string());
}

TransformerParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint " + path.string());
  expect(in, kMagic, path);
  expect(in, "format_version", path);
  const long version = read_int(in, path);
  if (version != kCheckpointFormatVersion)
    fail(ErrorKind::io, "unsupported checkpoint format_version " + std::to_string(version));
  expect(in, "d", path);
  const long d = read_int(in, path);
  expect(in, "L", path);
  const long L = read_int(in, path);
  if (d < 1 || L < 1 || d > 4096 || L > 4096)
    fail(ErrorKind::io, "checkpoint header has invalid d or L: " + path.string());

  TransformerParams p = TransformerParams::zeros(static_cast<int>(d), static_cast<int>(L));
  expect(in, "w_e", path);
  read_matrix(in, p.w_e, path);
  for (auto& layer : p.layers) {
    expect(in, "p", path);
    read_matrix(in, layer.p, path);
    expect(in, "q", path);
    read_matrix(in, layer.q, path);
  }
  return p;
}

std::string checkpoint_name(int d, int n, int L) {
  return "tf_d" + std::to_string(d) + "_n" + std::to_string(n) + "_L" + std::to_string(L) + ".ckpt";
}

}  // namespace iclab::tf
