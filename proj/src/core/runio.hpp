#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "core/config.hpp"

namespace ftc {

inline constexpr const char* kToolVersion = "0.1.0";

// <output_dir>/<kind>_<UTC timestamp>[_n]; created on return. A non-empty
// override is created verbatim instead.
std::string make_run_dir(const std::string& output_dir, const std::string& kind,
                         const std::string& override_dir = "");

// writes <run_dir>/config.json (effective config echo) and <run_dir>/run.json
// (tool version, kind, seed, checkpoint hashes) — enough to reproduce the run
void write_run_manifest(const std::string& run_dir, const RunConfig& cfg,
                        const std::string& kind, const nlohmann::json& checkpoints);

}  // namespace ftc
