#include "ftc/ftc.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>

#include "core/pipeline.hpp"

using namespace ftc;

namespace {

thread_local std::string g_last_error;

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::ValidationError:
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnknownSubcommand:
      return FTC_ERR_CONFIG;
    case ErrorCode::MissingModel:
    case ErrorCode::MissingArtifact:
      return FTC_ERR_MISSING_ARTIFACT;
    case ErrorCode::NonFiniteState:
    case ErrorCode::NonFiniteLoss:
      return FTC_ERR_NUMERIC;
    default:
      return FTC_ERR_INTERNAL;
  }
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_for(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FTC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return FTC_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

int set_out(char** out, const std::string& s) {
  if (out == nullptr) return FTC_OK;
  *out = dup_string(s);
  if (*out == nullptr) {
    g_last_error = "out of memory";
    return FTC_ERR_INTERNAL;
  }
  return FTC_OK;
}

std::string str_or_empty(const char* s) { return s == nullptr ? std::string() : std::string(s); }

}  // namespace

struct ftc_config {
  RunConfig cfg;
  nlohmann::json raw;  // pre-validation document, mutated by ftc_config_set
};

struct ftc_sim {
  Env env;
  ftc_sim(const EnvConfig& cfg, uint64_t seed) : env(cfg, seed) {}
};

extern "C" {

const char* ftc_version(void) { return kToolVersion; }

const char* ftc_last_error(void) { return g_last_error.c_str(); }

void ftc_string_free(char* s) { std::free(s); }

int ftc_config_create(const char* json_text, ftc_config** out) {
  return guarded([&]() {
    require(out != nullptr, ErrorCode::ValidationError, "null output pointer");
    *out = nullptr;
    nlohmann::json doc;
    const std::string text = str_or_empty(json_text);
    if (text.empty()) {
      doc = config_to_json(RunConfig{});
    } else {
      try {
        doc = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, e.what());
      }
    }
    auto* handle = new ftc_config{config_from_json(doc), doc};
    *out = handle;
    return FTC_OK;
  });
}

int ftc_config_load(const char* path, ftc_config** out) {
  return guarded([&]() {
    require(out != nullptr && path != nullptr, ErrorCode::ValidationError, "null argument");
    *out = nullptr;
    std::ifstream in(path);
    require(in.good(), ErrorCode::MissingArtifact, "cannot open config " + std::string(path));
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, std::string(path) + ": " + e.what());
    }
    auto* handle = new ftc_config{config_from_json(doc), doc};
    *out = handle;
    return FTC_OK;
  });
}

int ftc_config_set(ftc_config* cfg, const char* assignment) {
  return guarded([&]() {
    require(cfg != nullptr && assignment != nullptr, ErrorCode::ValidationError,
            "null argument");
    nlohmann::json doc = cfg->raw;
    apply_set_override(doc, assignment);
    cfg->cfg = config_from_json(doc);  // re-validates before committing
    cfg->raw = std::move(doc);
    return FTC_OK;
  });
}

int ftc_config_json(const ftc_config* cfg, char** out_json) {
  return guarded([&]() {
    require(cfg != nullptr, ErrorCode::ValidationError, "null config");
    return set_out(out_json, config_to_json(cfg->cfg).dump(2));
  });
}

void ftc_config_free(ftc_config* cfg) { delete cfg; }

int ftc_train_phase1(const ftc_config* cfg, const char* run_dir, int threads,
                     char** out_checkpoint_prefix) {
  return guarded([&]() {
    require(cfg != nullptr, ErrorCode::ValidationError, "null config");
    const std::string dir =
        make_run_dir(cfg->cfg.output_dir, "phase1", str_or_empty(run_dir));
    Phase1Result res = pipeline_train_phase1(cfg->cfg, dir, threads);
    return set_out(out_checkpoint_prefix, res.checkpoint_prefix);
  });
}

int ftc_train_phase2(const ftc_config* cfg, const char* phase1_prefix, const char* run_dir,
                     int threads, char** out_checkpoint_prefix) {
  return guarded([&]() {
    require(cfg != nullptr, ErrorCode::ValidationError, "null config");
    const std::string dir =
        make_run_dir(cfg->cfg.output_dir, "phase2", str_or_empty(run_dir));
    Phase2Result res =
        pipeline_train_phase2(cfg->cfg, str_or_empty(phase1_prefix), dir, threads);
    return set_out(out_checkpoint_prefix, res.checkpoint_prefix);
  });
}

int ftc_eval(const ftc_config* cfg, const char* mode, const char* checkpoint_prefix,
             const char* run_dir, int threads, char** out_summary_json) {
  return guarded([&]() {
    require(cfg != nullptr, ErrorCode::ValidationError, "null config");
    const auto m = mode_from_name(str_or_empty(mode));
    require(m.has_value(), ErrorCode::ValidationError,
            "unknown mode \"" + str_or_empty(mode) + "\"");
    const std::string dir = make_run_dir(cfg->cfg.output_dir, "eval", str_or_empty(run_dir));
    EvalSummary s =
        pipeline_eval(cfg->cfg, *m, str_or_empty(checkpoint_prefix), dir, threads);
    return set_out(out_summary_json, s.to_json().dump(2));
  });
}

int ftc_sweep(const ftc_config* cfg, const char* grid_path, const char* modes_csv,
              const char* phase1_prefix, const char* transformer_prefix,
              const char* cnn_prefix, const char* run_dir, int threads, char** out_csv_path) {
  return guarded([&]() {
    require(cfg != nullptr, ErrorCode::ValidationError, "null config");
    std::vector<ControllerMode> modes;
    std::string csv = str_or_empty(modes_csv);
    size_t pos = 0;
    while (pos <= csv.size() && !csv.empty()) {
      const size_t comma = csv.find(',', pos);
      const std::string name =
          csv.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      const auto m = mode_from_name(name);
      require(m.has_value(), ErrorCode::ValidationError, "unknown mode \"" + name + "\"");
      modes.push_back(*m);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    const std::string dir = make_run_dir(cfg->cfg.output_dir, "sweep", str_or_empty(run_dir));
    pipeline_sweep(cfg->cfg, str_or_empty(grid_path), modes, str_or_empty(phase1_prefix),
                   str_or_empty(transformer_prefix), str_or_empty(cnn_prefix), dir, threads);
    return set_out(out_csv_path, dir + "/sweep.csv");
  });
}

int ftc_replay(const char* log_path, char** out_summary_json) {
  return guarded([&]() {
    require(log_path != nullptr, ErrorCode::ValidationError, "null log path");
    ReplayResult r = pipeline_replay(log_path);
    const nlohmann::json summary = {
        {"rows", r.rows}, {"max_deviation", r.max_deviation}, {"ok", r.ok}};
    const int rc = set_out(out_summary_json, summary.dump(2));
    if (rc != FTC_OK) return rc;
    if (!r.ok) {
      g_last_error = "replay deviated from the log (max deviation " +
                     std::to_string(r.max_deviation) + ")";
      return FTC_ERR_NUMERIC;
    }
    return FTC_OK;
  });
}

int ftc_sim_create(const ftc_config* cfg, uint64_t seed, ftc_sim** out) {
  return guarded([&]() {
    require(cfg != nullptr && out != nullptr, ErrorCode::ValidationError, "null argument");
    *out = nullptr;
    cfg->cfg.env.validate();
    auto* sim = new ftc_sim(cfg->cfg.env, seed);
    sim->env.reset();
    *out = sim;
    return FTC_OK;
  });
}

int ftc_sim_reset(ftc_sim* sim) {
  return guarded([&]() {
    require(sim != nullptr, ErrorCode::ValidationError, "null sim");
    sim->env.reset();
    return FTC_OK;
  });
}

int ftc_sim_step(ftc_sim* sim, const double action[4], double* reward_out, int* status_out) {
  return guarded([&]() {
    require(sim != nullptr && action != nullptr, ErrorCode::ValidationError, "null argument");
    MotorCommand cmd;
    cmd.u = Vec4(action[0], action[1], action[2], action[3]);
    const Env::StepResult r = sim->env.step(cmd);
    if (reward_out != nullptr) *reward_out = r.reward;
    if (status_out != nullptr)
      *status_out = r.status.running() ? 0 : (r.status.crashed() ? 1 : 2);
    return FTC_OK;
  });
}

int ftc_sim_observation(const ftc_sim* sim, double obs_out[22]) {
  return guarded([&]() {
    require(sim != nullptr && obs_out != nullptr, ErrorCode::ValidationError, "null argument");
    const ObsVec obs = sim->env.observation();
    for (int i = 0; i < kObservationDim; ++i) obs_out[i] = obs[i];
    return FTC_OK;
  });
}

int ftc_sim_state(const ftc_sim* sim, double pos_out[3], double vel_out[3], double quat_out[4],
                  double rates_out[3]) {
  return guarded([&]() {
    require(sim != nullptr, ErrorCode::ValidationError, "null sim");
    const RigidBodyState& s = sim->env.state();
    if (pos_out != nullptr)
      for (int i = 0; i < 3; ++i) pos_out[i] = s.position[i];
    if (vel_out != nullptr)
      for (int i = 0; i < 3; ++i) vel_out[i] = s.velocity[i];
    if (quat_out != nullptr) {
      quat_out[0] = s.attitude.w();
      quat_out[1] = s.attitude.x();
      quat_out[2] = s.attitude.y();
      quat_out[3] = s.attitude.z();
    }
    if (rates_out != nullptr)
      for (int i = 0; i < 3; ++i) rates_out[i] = s.body_rates[i];
    return FTC_OK;
  });
}

int ftc_sim_time(const ftc_sim* sim, double* t_out) {
  return guarded([&]() {
    require(sim != nullptr && t_out != nullptr, ErrorCode::ValidationError, "null argument");
    *t_out = sim->env.time();
    return FTC_OK;
  });
}

void ftc_sim_free(ftc_sim* sim) { delete sim; }

}  // extern "C"
