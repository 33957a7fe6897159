// Command-line front end. Everything goes through the public C API; this
// translation unit deliberately includes no core headers.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ftc/ftc.h"

namespace {

struct ConfigHandle {
  ftc_config* ptr = nullptr;
  ~ConfigHandle() { ftc_config_free(ptr); }
};

struct ApiString {
  char* ptr = nullptr;
  ~ApiString() { ftc_string_free(ptr); }
  std::string str() const { return ptr == nullptr ? std::string() : std::string(ptr); }
};

int report(int rc) {
  std::fprintf(stderr, "error: %s\n", ftc_last_error());
  return rc;
}

int build_config(const std::string& config_path, const std::vector<std::string>& sets,
                 ConfigHandle& out) {
  int rc = config_path.empty() ? ftc_config_create(nullptr, &out.ptr)
                               : ftc_config_load(config_path.c_str(), &out.ptr);
  if (rc != FTC_OK) return rc;
  for (const std::string& s : sets) {
    rc = ftc_config_set(out.ptr, s.c_str());
    if (rc != FTC_OK) return rc;
  }
  return FTC_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fault-tolerant quadrotor control laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ftc_version()));

  std::string config_path, run_dir;
  std::vector<std::string> sets;
  int threads = 0;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration JSON");
    cmd->add_option("--set", sets, "override, key.path=value")->take_all();
    cmd->add_option("--run-dir", run_dir, "output directory (default: timestamped)");
    cmd->add_option("--threads", threads, "worker cap, 0 = auto (FTC_THREADS also caps)");
  };

  auto* p1 = app.add_subcommand("train-phase1", "PPO with the privileged extrinsics encoder");
  add_common(p1);

  auto* p2 = app.add_subcommand("train-phase2", "distill the history encoder from phase 1");
  add_common(p2);
  std::string phase1_prefix;
  p2->add_option("--phase1", phase1_prefix, "phase-1 checkpoint prefix")->required();

  auto* ev = app.add_subcommand("eval", "run episodes under one controller mode");
  add_common(ev);
  std::string mode = "pid", checkpoint;
  ev->add_option("--mode", mode, "pid|transformer|cnn|privileged|zero_latent");
  ev->add_option("--checkpoint", checkpoint, "checkpoint prefix (unused for pid)");

  auto* sw = app.add_subcommand("sweep", "grid of scenarios x controller modes");
  add_common(sw);
  std::string grid, modes_csv = "pid", sw_phase1, sw_transformer, sw_cnn;
  sw->add_option("--grid", grid, "grid JSON ({\"cells\": [{\"id\", \"env\"}...]})");
  sw->add_option("--modes", modes_csv, "comma-separated controller modes");
  sw->add_option("--phase1", sw_phase1, "phase-1 checkpoint prefix");
  sw->add_option("--phase2-transformer", sw_transformer, "transformer checkpoint prefix");
  sw->add_option("--phase2-cnn", sw_cnn, "cnn checkpoint prefix");

  auto* rp = app.add_subcommand("replay", "re-simulate a trajectory log and verify it");
  std::string log_path;
  rp->add_option("log", log_path, "trajectory .jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage problems are config errors
  }

  if (rp->parsed()) {
    ApiString summary;
    const int rc = ftc_replay(log_path.c_str(), &summary.ptr);
    if (rc != FTC_OK) {
      if (summary.ptr != nullptr) std::printf("%s\n", summary.ptr);
      return report(rc);
    }
    std::printf("replay OK\n%s\n", summary.str().c_str());
    return 0;
  }

  ConfigHandle cfg;
  if (const int rc = build_config(config_path, sets, cfg); rc != FTC_OK) return report(rc);

  if (p1->parsed()) {
    ApiString prefix;
    const int rc = ftc_train_phase1(cfg.ptr, run_dir.c_str(), threads, &prefix.ptr);
    if (rc != FTC_OK) return report(rc);
    std::printf("checkpoint %s\n", prefix.str().c_str());
    return 0;
  }
  if (p2->parsed()) {
    ApiString prefix;
    const int rc = ftc_train_phase2(cfg.ptr, phase1_prefix.c_str(), run_dir.c_str(), threads,
                                    &prefix.ptr);
    if (rc != FTC_OK) return report(rc);
    std::printf("checkpoint %s\n", prefix.str().c_str());
    return 0;
  }
  if (ev->parsed()) {
    ApiString summary;
    const int rc = ftc_eval(cfg.ptr, mode.c_str(), checkpoint.c_str(), run_dir.c_str(), threads,
                            &summary.ptr);
    if (rc != FTC_OK) return report(rc);
    std::printf("%s\n", summary.str().c_str());
    return 0;
  }
  if (sw->parsed()) {
    ApiString csv;
    const int rc = ftc_sweep(cfg.ptr, grid.c_str(), modes_csv.c_str(), sw_phase1.c_str(),
                             sw_transformer.c_str(), sw_cnn.c_str(), run_dir.c_str(), threads,
                             &csv.ptr);
    if (rc != FTC_OK) return report(rc);
    std::printf("table %s\n", csv.str().c_str());
    return 0;
  }
  return 2;
}
