#include "core/runio.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

namespace ftc {

std::string make_run_dir(const std::string& output_dir, const std::string& kind,
                         const std::string& override_dir) {
  namespace fs = std::filesystem;
  if (!override_dir.empty()) {
    fs::create_directories(override_dir);
    return override_dir;
  }
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d_%H%M%S", &tm);

  const std::string base = output_dir + "/" + kind + "_" + stamp;
  std::string dir = base;
  for (int n = 1; fs::exists(dir); ++n) dir = base + "_" + std::to_string(n);
  fs::create_directories(dir);
  return dir;
}

void write_run_manifest(const std::string& run_dir, const RunConfig& cfg,
                        const std::string& kind, const nlohmann::json& checkpoints) {
  {
    std::ofstream out(run_dir + "/config.json", std::ios::trunc);
    require(out.good(), ErrorCode::IoError, "cannot write " + run_dir + "/config.json");
    out << config_to_json(cfg).dump(2) << '\n';
  }
  nlohmann::json run;
  run["tool_version"] = kToolVersion;
  run["kind"] = kind;
  run["seed"] = cfg.seed;
  run["checkpoints"] = checkpoints.is_null() ? nlohmann::json::object() : checkpoints;
  std::ofstream out(run_dir + "/run.json", std::ios::trunc);
  require(out.good(), ErrorCode::IoError, "cannot write " + run_dir + "/run.json");
  out << run.dump(2) << '\n';
}

}  // namespace ftc
