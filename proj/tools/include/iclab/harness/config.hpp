#pragma once

#include "iclab/harness/json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace iclab::harness {

enum class Scale { desk, paper };

std::string to_string(Scale scale);
Scale parse_scale(const std::string& text);

/// Experiments runnable by name, in CLI order.
const std::vector<std::string>& experiment_names();
bool is_experiment(const std::string& name);

/// Full default config for an experiment at the given scale:
/// {experiment, master_seed, out_dir, scale, workers, parameters}.
Json default_config(const std::string& experiment, Scale scale);

/// Merges `user` onto `base`. Keys missing from `base` are rejected, and so
/// are values whose JSON type differs (numbers are interchangeable, and a
/// null default accepts anything).
void strict_merge(Json& base, const Json& user, const std::string& path = "");

/// Applies `key=value`. The key is a dotted path to an existing entry; paths
/// that are not top-level keys are looked up under "parameters". The value
/// is parsed as JSON, falling back to a plain string.
void apply_override(Json& config, const std::string& assignment);

struct CliRequest {
  std::string command;  // experiment name, figure id, "check" or "run"
  std::optional<std::filesystem::path> config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<std::string> scale;
  std::optional<int> workers;
};

/// Builds the resolved config: defaults for the experiment, then the config
/// file, then --scale/--out/--workers, then --set overrides in order.
Json resolve_config(const CliRequest& request, const std::string& experiment);

/// FNV-1a over the canonical dump, ignoring out_dir and workers, as 16 hex digits.
std::string config_hash(const Json& config);

Json read_json_file(const std::filesystem::path& path);

}  // namespace iclab::harness
