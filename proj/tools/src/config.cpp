#include "iclab/harness/config.hpp"

#include "iclab/common.hpp"
#include "iclab/parallel.hpp"
#include "iclab/rng.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace iclab::harness {

namespace {

Json prior_defaults() { return {{"mean", "e1"}, {"tau", 0.1}}; }

Json grid_defaults() {
  return {{"alpha_min", 1e-4}, {"alpha_max", 1.0}, {"alpha_points", 25},
          {"c_min", 0.0},      {"c_max", 1.6},     {"c_points", 17}};
}

Json sigma_defaults() {
  return {{"kind", "fixed"}, {"a", 0.1}, {"b", 0.1}, {"symmetric", false}};
}

std::vector<int> range(int lo, int hi, int step) {
  std::vector<int> out;
  for (int v = lo; v <= hi; v += step) out.push_back(v);
  return out;
}

Json parameters_for(const std::string& e, Scale scale) {
  const bool paper = scale == Scale::paper;
  const int trials = paper ? 100000 : 10000;

  if (e == "verify-equivalence")
    return {{"instances", 200}, {"max_d", 8},          {"max_n", 12},
            {"max_L", 6},       {"tolerance", 1e-9},   {"fault", "none"}};
  if (e == "check-oracles")
    return {{"trials", 100000}, {"instances", 200}, {"fault", "none"}};
  if (e == "grid-search" || e == "fig2")
    return {{"d_list", {15, 20, 25}}, {"n_list", {50}}, {"L_max", 8},
            {"trials", trials},       {"grid", grid_defaults()},
            {"prior", prior_defaults()}, {"dump_tasks", 0}};
  if (e == "scaling-study")
    return {{"d_list", {20}},   {"n_list", {25, 50, 100}}, {"L_list", {1, 2, 4, 8}},
            {"trials", trials}, {"grid", grid_defaults()}, {"prior", prior_defaults()}};
  if (e == "train")
    return {{"d", 20},
            {"n", 40},
            {"L", 2},
            {"steps", paper ? 600000 : 20000},
            {"batch_size", paper ? 5000 : 256},
            {"base_lr", paper ? 1e-4 : 1e-3},
            {"lr_halving_period", paper ? 50000 : 5000},
            {"grad_clip_norm", 1.0},
            {"optimizer", "adam"},
            {"train_embedding", true},
            {"init_scale", 0.02},
            {"prior", prior_defaults()}};
  if (e == "eval-clean")
    return {{"d", 20},           {"n", 40},         {"L", 2},
            {"checkpoint", ""},  {"n_eval", range(0, 40, 5)},
            {"trials", trials},  {"prior", prior_defaults()}};
  if (e == "eval-hijack" || e == "fig3" || e == "fig5")
    return {{"d", 20},
            {"n_list", e == "fig5" ? Json{40} : Json{10, 20, 40}},
            {"L_list", e == "fig5" ? Json{1, 2, 3, 4, 5, 6, 7, 8} : Json{1, 2, 3, 4}},
            {"N_max", 200},
            {"N_step", 10},
            {"trials", trials},
            {"source", "gd_explicit"},
            {"sigma", sigma_defaults()},
            {"alpha", nullptr},
            {"c", nullptr},
            {"grid_trials", trials},
            {"grid", grid_defaults()},
            {"prior", prior_defaults()},
            {"checkpoint_dir", ""},
            {"fit", true},
            {"dump_tasks", 0}};
  if (e == "sigma-sweep" || e == "fig6")
    return {{"d", 20},
            {"n", 40},
            {"L", 2},
            {"sigmas", {0.8, 0.4, 0.2, 0.1}},
            {"symmetric", false},
            {"N_max", 200},
            {"N_step", 10},
            {"trials", trials},
            {"source", "gd_explicit"},
            {"alpha", nullptr},
            {"c", nullptr},
            {"grid_trials", trials},
            {"grid", grid_defaults()},
            {"prior", prior_defaults()},
            {"checkpoint_dir", ""}};
  if (e == "fig4")
    return {{"d", 20},
            {"n", 40},
            {"L", 2},
            {"n_eval", range(0, 40, 5)},
            {"trials", trials},
            {"checkpoint_dir", ""},
            {"require_trained", true},
            {"grid_trials", trials},
            {"grid", grid_defaults()},
            {"prior", prior_defaults()}};
  fail(ErrorKind::config, "unknown experiment \"" + e + "\"");
}

bool same_kind(const Json& a, const Json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

}  // namespace

std::string to_string(Scale scale) { return scale == Scale::desk ? "desk" : "paper"; }

Scale parse_scale(const std::string& text) {
  if (text == "desk") return Scale::desk;
  if (text == "paper") return Scale::paper;
  fail(ErrorKind::config, "scale must be \"desk\" or \"paper\", got \"" + text + "\"");
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{
      "verify-equivalence", "grid-search", "scaling-study", "train", "eval-clean", "eval-hijack",
      "sigma-sweep",        "check-oracles", "fig2",        "fig3",  "fig4",       "fig5",
      "fig6"};
  return names;
}

bool is_experiment(const std::string& name) {
  const auto& n = experiment_names();
  return std::find(n.begin(), n.end(), name) != n.end();
}

Json default_config(const std::string& experiment, Scale scale) {
  return {{"experiment", experiment},
          {"master_seed", 0},
          {"out_dir", "runs/" + experiment},
          {"scale", to_string(scale)},
          {"workers", default_workers()},
          {"parameters", parameters_for(experiment, scale)}};
}

void strict_merge(Json& base, const Json& user, const std::string& path) {
  if (!user.is_object()) fail(ErrorKind::config, "expected an object at '" + path + "'");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) fail(ErrorKind::config, "unknown config key '" + key + "'");
    Json& slot = base[it.key()];
    if (slot.is_object()) {
      strict_merge(slot, it.value(), key);
    } else if (slot.is_null() || it.value().is_null() || same_kind(slot, it.value())) {
      slot = it.value();
    } else {
      fail(ErrorKind::config, "config key '" + key + "' expects " + std::string(slot.type_name()) +
                                  ", got " + it.value().type_name());
    }
  }
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorKind::config, "override '" + assignment + "' must look like key=value");
  std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (!config.contains(parts.front()) && config["parameters"].contains(parts.front()))
    parts.insert(parts.begin(), "parameters");

  Json patch = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = Json{{*it, patch}};
  strict_merge(config, patch);
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot read config file " + path.string());
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::config, "config file " + path.string() + " is not valid JSON");
  if (!j.is_object()) fail(ErrorKind::config, "config file must contain a JSON object");
  return j;
}

Json resolve_config(const CliRequest& request, const std::string& experiment) {
  Json file = Json::object();
  if (request.config_path) file = read_json_file(*request.config_path);
  if (file.contains("experiment") && file["experiment"] != experiment)
    fail(ErrorKind::config, "config file is for experiment '" + file["experiment"].dump() +
                                "', not '" + experiment + "'");

  std::string scale_text = "desk";
  if (file.contains("scale")) {
    if (!file["scale"].is_string()) fail(ErrorKind::config, "scale must be a string");
    scale_text = file["scale"].get<std::string>();
  }
  if (request.scale) scale_text = *request.scale;
  const Scale scale = parse_scale(scale_text);

  Json config = default_config(experiment, scale);
  strict_merge(config, file);
  config["scale"] = to_string(scale);
  if (request.out_dir) config["out_dir"] = *request.out_dir;
  if (request.workers) config["workers"] = *request.workers;
  for (const auto& o : request.overrides) apply_override(config, o);

  if (config["experiment"] != experiment) fail(ErrorKind::config, "experiment cannot be overridden");
  if (config["scale"] != to_string(scale))
    fail(ErrorKind::config, "scale selects the defaults; pass it with --scale or in the config file");
  if (!config["master_seed"].is_number_integer() && !config["master_seed"].is_number_unsigned())
    fail(ErrorKind::config, "master_seed must be an integer");
  if (!config["workers"].is_number_integer() || config["workers"].get<int>() < 1)
    fail(ErrorKind::config, "workers must be a positive integer");
  return config;
}

std::string config_hash(const Json& config) {
  Json copy = config;
  copy.erase("out_dir");
  copy.erase("workers");
  const std::uint64_t h = tag(copy.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace iclab::harness
