#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "core/adaptation.hpp"
#include "core/eval.hpp"

namespace ftc {

inline constexpr int kConfigVersion = 1;

struct EvalSettings {
  SuccessCriteria criteria;
  int episodes = 100;

  void validate() const;
};

// One JSON document drives a whole run. Missing fields keep their defaults,
// unknown fields are rejected by name, and `version` must match
// kConfigVersion.
struct RunConfig {
  int version = kConfigVersion;
  uint64_t seed = 1;
  std::string output_dir = "runs";
  EnvConfig env;
  PpoConfig ppo;
  AdaptationConfig adaptation;
  PidGains pid;
  EvalSettings eval;

  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

// effective config with every default applied, suitable as the run echo
nlohmann::json config_to_json(const RunConfig& cfg);

// applies one `--set path.to.key=value` override to the raw document; the
// value is parsed as JSON when possible and kept as a string otherwise
void apply_set_override(nlohmann::json& doc, const std::string& assignment);

// base env with a JSON patch applied through the same strict field reader
// that parses the config's "env" section (used by sweep grid cells)
EnvConfig env_with_overrides(const EnvConfig& base, const nlohmann::json& patch);

}  // namespace ftc
