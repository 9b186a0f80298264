// SPDX-License-Identifier: Apache-2.0
#include "wmd/cli/config.hpp"

#include "wmd/core/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>

namespace wmd::cli {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <class T>
T parse_number(const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw ConfigError("'" + text + "' is not a valid number");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("'" + text + "' is not a boolean");
}

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::vector<Field> make_fields() {
  std::vector<Field> f;
  auto add = [&](std::string s, std::string k, auto get, auto set) { f.push_back({s, k, get, set}); };
  auto integer = [&](std::string s, std::string k, auto ref) {
    add(s, k, [ref](const RunConfig& c) {
          RunConfig copy = c;
          return std::to_string(ref(copy));
        },
        [ref](RunConfig& c, const std::string& v) {
          using T = std::remove_reference_t<decltype(ref(c))>;
          ref(c) = parse_number<T>(v);
        });
  };
  auto real = [&](std::string s, std::string k, auto ref) {
    add(s, k, [ref](const RunConfig& c) {
          RunConfig copy = c;
          return fmt_double(ref(copy));
        },
        [ref](RunConfig& c, const std::string& v) { ref(c) = parse_number<double>(v); });
  };
  auto boolean = [&](std::string s, std::string k, auto ref) {
    add(s, k, [ref](const RunConfig& c) {
          RunConfig copy = c;
          return std::string(ref(copy) ? "true" : "false");
        },
        [ref](RunConfig& c, const std::string& v) { ref(c) = parse_bool(v); });
  };

  add("env", "name", [](const RunConfig& c) { return env::to_string(c.fit.env.id); },
      [](RunConfig& c, const std::string& v) { c.fit.env.id = env::parse_env_id(v); });
  integer("env", "obs_dim", [](RunConfig& c) -> int& { return c.fit.env.obs_dim; });
  real("env", "obs_noise", [](RunConfig& c) -> double& { return c.fit.env.obs_noise; });
  integer("env", "action_repeat", [](RunConfig& c) -> int& { return c.fit.env.action_repeat; });
  real("env", "dt", [](RunConfig& c) -> double& { return c.fit.env.dt; });
  integer("env", "episode_length", [](RunConfig& c) -> int& { return c.fit.env.episode_length; });
  real("env", "gravity", [](RunConfig& c) -> double& { return c.fit.env.physics.gravity; });
  real("env", "mass", [](RunConfig& c) -> double& { return c.fit.env.physics.mass; });
  real("env", "length", [](RunConfig& c) -> double& { return c.fit.env.physics.length; });
  real("env", "damping", [](RunConfig& c) -> double& { return c.fit.env.physics.damping; });
  real("env", "max_torque", [](RunConfig& c) -> double& { return c.fit.env.physics.max_torque; });
  real("env", "cart_mass", [](RunConfig& c) -> double& { return c.fit.env.physics.cart_mass; });
  real("env", "pole_mass", [](RunConfig& c) -> double& { return c.fit.env.physics.pole_mass; });
  real("env", "pole_length", [](RunConfig& c) -> double& { return c.fit.env.physics.pole_length; });
  real("env", "max_force", [](RunConfig& c) -> double& { return c.fit.env.physics.max_force; });

  add("model", "variant", [](const RunConfig& c) { return rssm::to_string(c.fit.model.variant); },
      [](RunConfig& c, const std::string& v) { c.fit.model.variant = rssm::parse_variant(v); });
  integer("model", "stoch", [](RunConfig& c) -> int& { return c.fit.model.stoch; });
  integer("model", "groups", [](RunConfig& c) -> int& { return c.fit.model.groups; });
  integer("model", "classes", [](RunConfig& c) -> int& { return c.fit.model.classes; });
  integer("model", "deter", [](RunConfig& c) -> int& { return c.fit.model.deter; });
  integer("model", "hidden", [](RunConfig& c) -> int& { return c.fit.model.hidden; });
  integer("model", "layers", [](RunConfig& c) -> int& { return c.fit.model.layers; });
  add("model", "activation", [](const RunConfig& c) { return nn::to_string(c.fit.model.activation); },
      [](RunConfig& c, const std::string& v) { c.fit.model.activation = nn::parse_activation(v); });

  real("train", "lr", [](RunConfig& c) -> double& { return c.fit.train.learning_rate; });
  real("train", "clip", [](RunConfig& c) -> double& { return c.fit.train.grad_clip; });
  integer("train", "batch", [](RunConfig& c) -> int& { return c.fit.train.batch; });
  integer("train", "length", [](RunConfig& c) -> int& { return c.fit.train.length; });
  integer("train", "warmup_episodes", [](RunConfig& c) -> int& { return c.fit.train.warmup_episodes; });
  integer("train", "collect_every", [](RunConfig& c) -> int& { return c.fit.train.collect_every; });
  real("train", "explore_noise", [](RunConfig& c) -> double& { return c.fit.train.explore_noise; });
  integer("train", "env_steps", [](RunConfig& c) -> long& { return c.fit.train.env_steps; });
  boolean("train", "train_ensembles", [](RunConfig& c) -> bool& { return c.fit.train.train_ensembles; });

  integer("ensemble", "members", [](RunConfig& c) -> int& { return c.fit.ensemble.members; });
  integer("ensemble", "hidden", [](RunConfig& c) -> int& { return c.fit.ensemble.hidden; });
  integer("ensemble", "layers", [](RunConfig& c) -> int& { return c.fit.ensemble.layers; });
  real("ensemble", "lr", [](RunConfig& c) -> double& { return c.fit.ensemble.learning_rate; });
  real("ensemble", "clip", [](RunConfig& c) -> double& { return c.fit.ensemble.grad_clip; });
  boolean("ensemble", "bootstrap", [](RunConfig& c) -> bool& { return c.fit.ensemble.bootstrap; });
  integer("ensemble", "batch", [](RunConfig& c) -> int& { return c.fit.ensemble.batch; });

  integer("rollout", "horizon", [](RunConfig& c) -> int& { return c.rollout.horizon; });
  integer("rollout", "warmup", [](RunConfig& c) -> int& { return c.rollout.warmup; });
  add("rollout", "policy", [](const RunConfig& c) { return training::to_string(c.rollout.policy); },
      [](RunConfig& c, const std::string& v) { c.rollout.policy = training::parse_policy(v); });
  real("rollout", "policy_noise", [](RunConfig& c) -> double& { return c.rollout.policy_noise; });
  integer("rollout", "count", [](RunConfig& c) -> int& { return c.rollout_count; });

  integer("diagnostics", "knn", [](RunConfig& c) -> int& { return c.diagnostics.knn; });
  integer("diagnostics", "bins", [](RunConfig& c) -> int& { return c.diagnostics.bins; });
  add("diagnostics", "field_kinds", [](const RunConfig& c) { return c.diagnostics.field_kinds; },
      [](RunConfig& c, const std::string& v) { c.diagnostics.field_kinds = v; });
  integer("diagnostics", "exemplars", [](RunConfig& c) -> int& { return c.diagnostics.exemplars; });

  add("output", "dir", [](const RunConfig& c) { return c.output_dir.string(); },
      [](RunConfig& c, const std::string& v) { c.output_dir = v; });

  integer("run", "seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
  integer("run", "workers", [](RunConfig& c) -> int& { return c.workers; });
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = make_fields();
  return f;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

std::string upper(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

}  // namespace

void RunConfig::validate() const {
  fit.env.validate();
  fit.train.validate();
  fit.ensemble.validate();
  rollout.validate();
  if (rollout_count < 1) throw ConfigError("rollout.count must be >= 1");
  if (diagnostics.knn < 1) throw ConfigError("diagnostics.knn must be >= 1");
  if (diagnostics.bins < 1) throw ConfigError("diagnostics.bins must be >= 1");
  if (diagnostics.exemplars < 0) throw ConfigError("diagnostics.exemplars must be >= 0");
  if (diagnostics.field_kinds != "prior" && diagnostics.field_kinds != "posterior" &&
      diagnostics.field_kinds != "both")
    throw ConfigError("diagnostics.field_kinds must be prior, posterior or both");
  if (workers < 1) throw ConfigError("run.workers must be >= 1");
  // model sizes are checked once bound to the environment
  auto model = fit.model;
  model.obs_dim = fit.env.obs_dim;
  model.validate();
}

EnvLookup process_environment() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

void apply_settings(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& settings,
                    const std::string& origin) {
  for (const auto& [name, value] : settings) {
    const auto dot = name.find('.');
    const std::string section = dot == std::string::npos ? "" : name.substr(0, dot);
    const std::string key = dot == std::string::npos ? name : name.substr(dot + 1);
    const Field* f = find_field(section, key);
    if (f == nullptr) throw ConfigError(origin + ": unknown key '" + name + "'");
    try {
      f->set(cfg, trim(value));
    } catch (const std::exception& e) {
      throw ConfigError(origin + ": " + name + ": " + e.what());
    }
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const EnvLookup& env) {
  RunConfig cfg;
  if (!path.empty()) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    std::vector<std::pair<std::string, std::string>> settings;
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError(path.string() + ": key '" + section + "' outside any section");
      for (const auto& [key, value] : body) settings.emplace_back(section + "." + key, value.data());
    }
    apply_settings(cfg, settings, path.string());
  }
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& f : fields()) {
    const std::string var = "WMD_" + upper(f.section) + "__" + upper(f.key);
    if (auto v = env(var)) overrides.emplace_back(f.section + "." + f.key, *v);
  }
  apply_settings(cfg, overrides, "environment");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError((path.empty() ? std::string("defaults") : path.string()) + ": " + e.what());
  }
  return cfg;
}

std::map<std::string, std::string> resolved_map(const RunConfig& cfg) {
  std::map<std::string, std::string> m;
  for (const auto& f : fields()) m[f.section + "." + f.key] = f.get(cfg);
  return m;
}

void write_resolved(std::ostream& out, const RunConfig& cfg) {
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << f.section << "]\n";
      section = f.section;
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.section + "." + f.key);
  return keys;
}

}  // namespace wmd::cli
