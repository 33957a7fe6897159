#include "core/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <nlohmann/json.hpp>

namespace ftc {

void SuccessCriteria::validate() const {
  require(final_window_s > 0.0, ErrorCode::InvalidConfig,
          "eval.final_window_s must be > 0");
  require(mean_error_threshold_m > 0.0, ErrorCode::InvalidConfig,
          "eval.mean_error_threshold_m must be > 0");
}

double rmse(const std::vector<Vec3>& positions, const std::vector<Vec3>& reference) {
  require(positions.size() == reference.size(), ErrorCode::LengthMismatch,
          "rmse: sequence lengths differ");
  require(!positions.empty(), ErrorCode::LengthMismatch, "rmse: empty sequences");
  double sum = 0.0;
  for (size_t i = 0; i < positions.size(); ++i)
    sum += (positions[i] - reference[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(positions.size()));
}

bool success(const std::vector<double>& times, const std::vector<double>& errors,
             double episode_length_s, bool crashed, const SuccessCriteria& criteria) {
  if (crashed) return false;
  require(times.size() == errors.size(), ErrorCode::LengthMismatch,
          "success: time/error lengths differ");
  const double window_start = episode_length_s - criteria.final_window_s;
  double sum = 0.0;
  int n = 0;
  for (size_t i = 0; i < times.size(); ++i) {
    if (times[i] >= window_start) {
      sum += errors[i];
      ++n;
    }
  }
  if (n == 0) return false;
  return sum / n < criteria.mean_error_threshold_m;
}

namespace {

nlohmann::json vec3_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
nlohmann::json vec4_json(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }
nlohmann::json quat_json(const Quat& q) { return {q.w(), q.x(), q.y(), q.z()}; }

Vec3 vec3_from(const nlohmann::json& j) { return Vec3(j[0], j[1], j[2]); }
Vec4 vec4_from(const nlohmann::json& j) { return Vec4(j[0], j[1], j[2], j[3]); }
Quat quat_from(const nlohmann::json& j) { return Quat(j[0], j[1], j[2], j[3]); }

nlohmann::json header_json(const Scenario& scenario, const Env& env, uint64_t seed,
                           const HybridArtifacts* artifacts) {
  const QuadrotorParams& p = env.task().params;
  const MotorFault& f = env.task().fault;
  const RigidBodyState& s = env.state();
  nlohmann::json h;
  h["type"] = "header";
  h["version"] = 1;
  h["mode"] = mode_name(scenario.mode);
  h["label"] = scenario.label;
  h["seed"] = seed;
  h["control_dt"] = env.control_dt();
  h["physics_dt"] = env.config().physics_dt_s;
  h["episode_length"] = env.config().episode_length_s;
  h["params"] = {{"mass", p.mass},
                 {"inertia", vec3_json(p.inertia_diag)},
                 {"arm_length", p.arm_length},
                 {"thrust_coeff", p.thrust_coeff},
                 {"torque_coeff", p.torque_coeff},
                 {"motor_time_const", p.motor_time_const},
                 {"max_rotor_speed", p.max_rotor_speed},
                 {"gravity", p.gravity}};
  h["fault"] = {{"eta", vec4_json(f.eta)}, {"onset_time", f.onset_time}};
  h["initial_state"] = {{"position", vec3_json(s.position)},
                        {"velocity", vec3_json(s.velocity)},
                        {"quaternion", quat_json(s.attitude)},
                        {"body_rates", vec3_json(s.body_rates)},
                        {"rotor_speeds", vec4_json(s.rotor_speeds)}};
  if (artifacts != nullptr) h["checkpoint_sha256"] = artifacts->checkpoint_sha256;
  return h;
}
}  // namespace

EpisodeMetrics run_episode(const Scenario& scenario, const HybridArtifacts* artifacts,
                           const PidGains& gains, uint64_t seed,
                           const SuccessCriteria& criteria, const std::string& log_path) {
  scenario.env.validate();
  criteria.validate();

  Env env(scenario.env, derive_seed(seed, {0xE9}));
  if (scenario.task.has_value())
    env.reset_with(*scenario.task, derive_seed(seed, {0x1A}));
  else
    env.reset();

  Controller controller(scenario.mode, gains, artifacts);

  std::ofstream log;
  const bool logging = !log_path.empty();
  if (logging) {
    if (const auto dir = std::filesystem::path(log_path).parent_path(); !dir.empty())
      std::filesystem::create_directories(dir);
    log.open(log_path, std::ios::trunc);
    require(log.good(), ErrorCode::IoError, "cannot write " + log_path);
    log << header_json(scenario, env, seed, artifacts).dump() << '\n';
  }

  std::vector<double> times, errors;
  times.reserve(1024);
  errors.reserve(1024);

  EpisodeMetrics m;
  EpisodeStatus status;
  while (true) {
    const double t = env.time();
    const RigidBodyState s = env.state();  // copy: rows log the pre-step state
    const Vec3 target = env.target_at(t);
    times.push_back(t);
    errors.push_back((s.position - target).norm());

    const MotorCommand cmd = controller.step(env);
    const Env::StepResult r = env.step(cmd);
    m.steps += 1;

    if (logging) {
      nlohmann::json row;
      row["type"] = "step";
      row["t"] = t;
      row["position"] = vec3_json(s.position);
      row["velocity"] = vec3_json(s.velocity);
      row["quaternion"] = quat_json(s.attitude);
      row["body_rates"] = vec3_json(s.body_rates);
      row["action"] = vec4_json(cmd.u);
      row["effectiveness"] = vec4_json(fault_at(env.task().fault, t));
      if (controller.has_privileged_latent()) {
        auto z = nlohmann::json::array();
        for (float v : controller.last_z()) z.push_back(v);
        row["z"] = z;
      }
      if (scenario.mode != ControllerMode::PidBaseline) {
        auto zh = nlohmann::json::array();
        for (float v : controller.last_zhat()) zh.push_back(v);
        row["zhat"] = zh;
      }
      row["reward"] = r.reward;
      log << row.dump() << '\n';
    }

    status = r.status;
    if (!status.running()) break;
  }

  m.crashed = status.crashed();
  m.crash_cause = m.crashed ? status.cause : EpisodeStatus::Cause::None;
  m.onset_time =
      (env.task().fault.eta.minCoeff() < 1.0) ? env.task().fault.onset_time : 0.0;

  double sum_all = 0.0, sum_post = 0.0, sum_final = 0.0;
  int n_post = 0, n_final = 0;
  const double window_start = scenario.env.episode_length_s - criteria.final_window_s;
  for (size_t i = 0; i < times.size(); ++i) {
    sum_all += errors[i];
    if (times[i] >= m.onset_time) {
      sum_post += errors[i] * errors[i];
      ++n_post;
    }
    if (times[i] >= window_start) {
      sum_final += errors[i];
      ++n_final;
    }
  }
  m.mean_pos_error = sum_all / static_cast<double>(times.size());
  if (n_post > 0) m.rmse_post_onset = std::sqrt(sum_post / n_post);
  if (n_final > 0) m.final_window_mean_error = sum_final / n_final;
  m.success = success(times, errors, scenario.env.episode_length_s, m.crashed, criteria);
  m.log_path = log_path;
  return m;
}

// ---- replay ----

ReplayResult replay_log(const std::string& jsonl_path) {
  std::ifstream in(jsonl_path);
  require(in.good(), ErrorCode::MissingArtifact, "cannot open " + jsonl_path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError,
          "empty trajectory log");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("bad log header: ") + e.what());
  }
  require(header.value("type", "") == "header", ErrorCode::ValidationError,
          "first log line is not a header");

  QuadrotorParams p;
  const auto& pj = header.at("params");
  p.mass = pj.at("mass");
  p.inertia_diag = vec3_from(pj.at("inertia"));
  p.arm_length = pj.at("arm_length");
  p.thrust_coeff = pj.at("thrust_coeff");
  p.torque_coeff = pj.at("torque_coeff");
  p.motor_time_const = pj.at("motor_time_const");
  p.max_rotor_speed = pj.at("max_rotor_speed");
  p.gravity = pj.at("gravity");

  MotorFault fault;
  fault.eta = vec4_from(header.at("fault").at("eta"));
  fault.onset_time = header.at("fault").at("onset_time");

  RigidBodyState state;
  const auto& is = header.at("initial_state");
  state.position = vec3_from(is.at("position"));
  state.velocity = vec3_from(is.at("velocity"));
  state.attitude = quat_from(is.at("quaternion"));
  state.body_rates = vec3_from(is.at("body_rates"));
  state.rotor_speeds = vec4_from(is.at("rotor_speeds"));

  const double control_dt = header.at("control_dt");
  const double physics_dt = header.at("physics_dt");
  const int substeps = static_cast<int>(std::llround(control_dt / physics_dt));
  require(substeps >= 1 && std::abs(substeps * physics_dt - control_dt) < 1e-12,
          ErrorCode::ValidationError, "control_dt is not a multiple of physics_dt");

  ReplayResult res;
  double t = 0.0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, std::string("bad log row: ") + e.what());
    }
    if (row.value("type", "") != "step") continue;

    // the logged row is the pre-step state; compare against the re-simulated
    // state (exact for the first row by construction of the header)
    const Vec3 pos = vec3_from(row.at("position"));
    const Vec3 vel = vec3_from(row.at("velocity"));
    const Quat q = quat_from(row.at("quaternion"));
    const Vec3 rates = vec3_from(row.at("body_rates"));
    double dev = 0.0;
    dev = std::max(dev, (pos - state.position).cwiseAbs().maxCoeff());
    dev = std::max(dev, (vel - state.velocity).cwiseAbs().maxCoeff());
    dev = std::max(dev, (q.coeffs() - state.attitude.coeffs()).cwiseAbs().maxCoeff());
    dev = std::max(dev, (rates - state.body_rates).cwiseAbs().maxCoeff());
    res.max_deviation = std::max(res.max_deviation, dev);
    if (first) {
      require(dev == 0.0, ErrorCode::ValidationError,
              "log initial state does not match header");
      first = false;
    }

    MotorCommand cmd;
    cmd.u = vec4_from(row.at("action"));
    res.rows += 1;
    try {
      for (int k = 0; k < substeps; ++k) {
        state = step_rk4(state, cmd, fault, p, t, physics_dt);
        t += physics_dt;
      }
    } catch (const Error& e) {
      // the live episode ends on the same divergence, so this must be the
      // last logged row
      if (e.code() != ErrorCode::NonFiniteState) throw;
      require(!std::getline(in, line) || line.empty(), ErrorCode::ValidationError,
              "log continues past a non-finite state");
      break;
    }
  }
  require(res.rows > 0, ErrorCode::ValidationError, "trajectory log has no step rows");
  res.ok = res.max_deviation == 0.0;
  return res;
}

// ---- sweep ----

const HybridArtifacts* ArtifactSet::for_mode(ControllerMode m) const {
  switch (m) {
    case ControllerMode::PidBaseline:
      return phase1;  // optional, only for latent logging
    case ControllerMode::HybridTransformer:
      return transformer;
    case ControllerMode::HybridCnn:
      return cnn;
    case ControllerMode::HybridPrivileged:
    case ControllerMode::HybridZeroLatent:
      if (phase1 != nullptr) return phase1;
      if (transformer != nullptr) return transformer;
      return cnn;
  }
  return nullptr;
}

uint64_t sweep_episode_seed(uint64_t master_seed, int cell_index, int episode_index) {
  return derive_seed(master_seed,
                     {0x5EED, static_cast<uint64_t>(cell_index),
                      static_cast<uint64_t>(episode_index)});
}

namespace {
std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}
}  // namespace

std::vector<SweepRow> sweep(const std::vector<SweepCell>& cells,
                            const std::vector<ControllerMode>& modes, int episodes_per_cell,
                            uint64_t master_seed, const SuccessCriteria& criteria,
                            const PidGains& gains, const ArtifactSet& artifacts,
                            const std::string& csv_path, const std::string& log_dir,
                            int threads) {
  require(!cells.empty() && !modes.empty() && episodes_per_cell >= 1,
          ErrorCode::InvalidConfig, "sweep needs cells, modes and episodes");

  // distinct (cell, episode) pairs must map to distinct seeds
  {
    std::vector<uint64_t> seeds;
    for (size_t c = 0; c < cells.size(); ++c)
      for (int e = 0; e < episodes_per_cell; ++e)
        seeds.push_back(sweep_episode_seed(master_seed, static_cast<int>(c), e));
    std::sort(seeds.begin(), seeds.end());
    require(std::adjacent_find(seeds.begin(), seeds.end()) == seeds.end(),
            ErrorCode::Internal, "seed collision across sweep grid");
  }

  // artifact/mode mismatches must fail the sweep up front, not surface as
  // per-episode "crashes"
  for (ControllerMode m : modes) Controller probe(m, gains, artifacts.for_mode(m));

  struct Job {
    int cell;
    int mode;
    int episode;
  };
  std::vector<Job> jobs;
  for (size_t c = 0; c < cells.size(); ++c)
    for (size_t m = 0; m < modes.size(); ++m)
      for (int e = 0; e < episodes_per_cell; ++e)
        jobs.push_back({static_cast<int>(c), static_cast<int>(m), e});

  std::vector<EpisodeMetrics> results(jobs.size());
  auto run_job = [&](size_t j) {
    const Job& job = jobs[j];
    Scenario scenario;
    scenario.env = cells[job.cell].env;
    scenario.mode = modes[job.mode];
    std::string log_path;
    if (!log_dir.empty())
      log_path = log_dir + "/" + cells[job.cell].id + "_" + mode_name(modes[job.mode]) + "_ep" +
                 std::to_string(job.episode) + ".jsonl";
    const uint64_t seed = sweep_episode_seed(master_seed, job.cell, job.episode);
    try {
      results[j] = run_episode(scenario, artifacts.for_mode(scenario.mode), gains, seed,
                               criteria, log_path);
    } catch (const std::exception& e) {
      // a failed episode is recorded, never fatal for the sweep
      std::cerr << "episode " << cells[job.cell].id << "/" << mode_name(scenario.mode) << "/"
                << job.episode << " failed: " << e.what() << "\n";
      results[j] = EpisodeMetrics{};
      results[j].crashed = true;
      results[j].crash_cause = EpisodeStatus::Cause::NonFinite;
    }
  };

  if (threads <= 1 || jobs.size() == 1) {
    for (size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    const size_t workers = std::min<size_t>(threads, jobs.size());
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w]() {
        for (size_t j = w; j < jobs.size(); j += workers) run_job(j);
      });
    for (auto& t : pool) t.join();
  }

  // aggregate in grid order
  std::vector<SweepRow> rows;
  size_t idx = 0;
  for (size_t c = 0; c < cells.size(); ++c) {
    for (size_t m = 0; m < modes.size(); ++m) {
      SweepRow row;
      row.cell_id = cells[c].id;
      row.mode = mode_name(modes[m]);
      row.params = cells[c].params;
      row.episodes = episodes_per_cell;
      std::vector<double> rmse_success, rmse_all;
      int successes = 0;
      for (int e = 0; e < episodes_per_cell; ++e, ++idx) {
        const EpisodeMetrics& em = results[idx];
        if (em.success) {
          ++successes;
          rmse_success.push_back(em.rmse_post_onset);
        }
        if (!std::isnan(em.rmse_post_onset)) rmse_all.push_back(em.rmse_post_onset);
        if (em.crashed) {
          switch (em.crash_cause) {
            case EpisodeStatus::Cause::Tilt: ++row.crash_tilt; break;
            case EpisodeStatus::Cause::OutOfBounds: ++row.crash_oob; break;
            default: ++row.crash_nonfinite; break;
          }
        }
      }
      row.success_rate = static_cast<double>(successes) / episodes_per_cell;
      auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        if (v.empty()) return;
        double s = 0.0;
        for (double x : v) s += x;
        mean = s / static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        sd = std::sqrt(var / static_cast<double>(v.size()));
      };
      mean_std(rmse_success, row.rmse_mean_success, row.rmse_std_success);
      mean_std(rmse_all, row.rmse_mean_all, row.rmse_std_all);
      rows.push_back(std::move(row));
    }
  }

  if (!csv_path.empty()) {
    if (const auto dir = std::filesystem::path(csv_path).parent_path(); !dir.empty())
      std::filesystem::create_directories(dir);
    std::ofstream csv(csv_path, std::ios::trunc);
    require(csv.good(), ErrorCode::IoError, "cannot write " + csv_path);
    csv << "cell_id,mode,params,episodes,success_rate,rmse_mean_success,rmse_std_success,"
           "crash_tilt,crash_oob,crash_nonfinite,rmse_mean_all,rmse_std_all\n";
    for (const auto& r : rows) {
      csv << r.cell_id << ',' << r.mode << ',' << r.params << ',' << r.episodes << ','
          << fmt_double(r.success_rate) << ',' << fmt_double(r.rmse_mean_success) << ','
          << fmt_double(r.rmse_std_success) << ',' << r.crash_tilt << ',' << r.crash_oob << ','
          << r.crash_nonfinite << ',' << fmt_double(r.rmse_mean_all) << ','
          << fmt_double(r.rmse_std_all) << '\n';
    }
  }
  return rows;
}

}  // namespace ftc
