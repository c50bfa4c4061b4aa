#include "iclab/common.hpp"
#include "iclab/harness/config.hpp"
#include "iclab/harness/experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace iclab;
using namespace iclab::harness;

std::string kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return "config";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::diverged: return "diverged";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::io: return "io";
    case ErrorKind::runtime: return "runtime";
  }
  return "runtime";
}

int report(const std::string& kind, const std::string& message, int code) {
  std::cerr << "iclab: error kind=" << kind << " message=" << Json(message).dump() << "\n";
  return code;
}

std::string experiment_for(const CliRequest& req) {
  if (req.command == "check") return "check-oracles";
  if (req.command != "run") {
    if (!is_experiment(req.command)) fail(ErrorKind::config, "unknown command \"" + req.command + "\"");
    return req.command;
  }
  if (!req.config_path) fail(ErrorKind::config, "'run' needs --config");
  const Json file = read_json_file(*req.config_path);
  if (!file.contains("experiment") || !file.at("experiment").is_string())
    fail(ErrorKind::config, "config file has no \"experiment\" string");
  return file.at("experiment").get<std::string>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-context linear classification and context-hijacking experiments"};
  app.set_version_flag("--version", std::string(iclab::kVersion));

  CliRequest req;
  std::string config_path, out, scale;
  int workers = 0;
  std::string commands;
  for (const auto& name : experiment_names()) commands += " " + name;
  app.add_option("command", req.command, "Experiment, figure id, 'check' or 'run'. One of:" + commands +
                                             " check run")
      ->required();
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", req.overrides, "key=value override, repeatable");
  app.add_option("--out", out, "Output directory");
  app.add_option("--scale", scale, "desk or paper");
  app.add_option("--workers", workers, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  if (!config_path.empty()) req.config_path = config_path;
  if (!out.empty()) req.out_dir = out;
  if (!scale.empty()) req.scale = scale;
  if (app.count("--workers")) req.workers = workers;

  try {
    const Json config = resolve_config(req, experiment_for(req));
    const int rc = run_experiment(config);
    std::cout << "iclab: " << config.at("experiment").get<std::string>() << " wrote "
              << config.at("out_dir").get<std::string>() << (rc == kExitOk ? "" : " (verification failed)")
              << "\n";
    return rc;
  } catch (const Error& e) {
    return report(kind_name(e.kind()), e.what(), e.kind() == ErrorKind::config ? kExitConfig : kExitRuntime);
  } catch (const nlohmann::json::exception& e) {
    return report("config", e.what(), kExitConfig);
  } catch (const std::exception& e) {
    return report("runtime", e.what(), kExitRuntime);
  }
}
