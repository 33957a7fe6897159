#include "core/config.hpp"

#include <fstream>
#include <set>

namespace ftc {
namespace {

// Strict object reader: every getter marks its key consumed, finish() rejects
// whatever was not consumed, naming it with its full dotted path.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    require(j_.is_object(), ErrorCode::ValidationError,
            (prefix_.empty() ? std::string("config") : prefix_) + " must be a JSON object");
  }

  std::string name(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

  const nlohmann::json* take(const char* key) {
    consumed_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const char* key, double& out) {
    if (const auto* v = take(key)) {
      require(v->is_number(), ErrorCode::ValidationError, name(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void number(const char* key, float& out) {
    double d = out;
    number(key, d);
    out = static_cast<float>(d);
  }
  void integer(const char* key, int& out) {
    if (const auto* v = take(key)) {
      require(v->is_number_integer(), ErrorCode::ValidationError,
              name(key) + " must be an integer");
      out = v->get<int>();
    }
  }
  void integer(const char* key, int64_t& out) {
    if (const auto* v = take(key)) {
      require(v->is_number_integer(), ErrorCode::ValidationError,
              name(key) + " must be an integer");
      out = v->get<int64_t>();
    }
  }
  void seed_value(const char* key, uint64_t& out) {
    if (const auto* v = take(key)) {
      require(v->is_number_integer() && (v->is_number_unsigned() || v->get<int64_t>() >= 0),
              ErrorCode::ValidationError, name(key) + " must be a non-negative integer");
      out = v->get<uint64_t>();
    }
  }
  void text(const char* key, std::string& out) {
    if (const auto* v = take(key)) {
      require(v->is_string(), ErrorCode::ValidationError, name(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  void vec3(const char* key, Vec3& out) {
    if (const auto* v = take(key)) {
      require(v->is_array() && v->size() == 3 && (*v)[0].is_number() && (*v)[1].is_number() &&
                  (*v)[2].is_number(),
              ErrorCode::ValidationError, name(key) + " must be an array of 3 numbers");
      out = Vec3((*v)[0].get<double>(), (*v)[1].get<double>(), (*v)[2].get<double>());
    }
  }
  void range(const char* key, Range& out) {
    if (const auto* v = take(key)) {
      require(v->is_array() && v->size() == 2 && (*v)[0].is_number() && (*v)[1].is_number(),
              ErrorCode::ValidationError, name(key) + " must be a [lo, hi] array");
      out.lo = (*v)[0].get<double>();
      out.hi = (*v)[1].get<double>();
    }
  }
  const nlohmann::json* object(const char* key) {
    if (const auto* v = take(key)) {
      require(v->is_object(), ErrorCode::ValidationError, name(key) + " must be an object");
      return v;
    }
    return nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      require(consumed_.count(it.key()) > 0, ErrorCode::ValidationError,
              "unknown config field \"" + name(it.key()) + "\"");
  }

 private:
  const nlohmann::json& j_;
  std::string prefix_;
  std::set<std::string> consumed_;
};

void read_nominal(const nlohmann::json& j, const std::string& prefix, QuadrotorParams& p) {
  Fields f(j, prefix);
  f.number("mass", p.mass);
  f.vec3("inertia", p.inertia_diag);
  f.number("arm_length", p.arm_length);
  f.number("thrust_coeff", p.thrust_coeff);
  f.number("torque_coeff", p.torque_coeff);
  f.number("motor_time_const", p.motor_time_const);
  f.number("max_rotor_speed", p.max_rotor_speed);
  f.number("gravity", p.gravity);
  f.finish();
}

void read_env(const nlohmann::json& j, EnvConfig& env) {
  Fields f(j, "env");
  f.number("episode_length_s", env.episode_length_s);
  f.number("control_rate_hz", env.control_rate_hz);
  f.number("physics_dt_s", env.physics_dt_s);
  if (const auto* nom = f.object("nominal")) read_nominal(*nom, "env.nominal", env.nominal);
  f.range("mass_range", env.mass_range);
  f.range("arm_length_range", env.arm_length_range);
  f.range("k_f_range", env.k_f_range);
  f.range("inertia_xx_range", env.inertia_xx_range);
  f.range("inertia_yy_range", env.inertia_yy_range);
  f.range("inertia_zz_range", env.inertia_zz_range);
  f.range("motor_time_const_range", env.motor_time_const_range);
  f.range("eta_range", env.eta_range);
  f.integer("num_faulted", env.num_faulted);
  f.range("onset_range", env.onset_range);
  std::string target = env.target_mode == TargetMode::Hover ? "hover" : "waypoints";
  f.text("target_mode", target);
  if (target == "hover")
    env.target_mode = TargetMode::Hover;
  else if (target == "waypoints")
    env.target_mode = TargetMode::Waypoints;
  else
    fail(ErrorCode::ValidationError, "env.target_mode must be \"hover\" or \"waypoints\"");
  f.vec3("hover_position", env.hover_position);
  f.number("waypoint_half_side", env.waypoint_half_side);
  f.number("w_position", env.w_position);
  f.number("w_velocity", env.w_velocity);
  f.number("w_body_rates", env.w_body_rates);
  f.number("w_action_rate", env.w_action_rate);
  f.number("crash_penalty", env.crash_penalty);
  f.number("tilt_cos_min", env.tilt_cos_min);
  f.number("position_bound_m", env.position_bound_m);
  f.number("spawn_offset_m", env.spawn_offset_m);
  f.finish();
}

void read_ppo(const nlohmann::json& j, PpoConfig& ppo) {
  Fields f(j, "ppo");
  f.number("gamma", ppo.gamma);
  f.number("lambda", ppo.lambda);
  f.number("clip_eps", ppo.clip_eps);
  f.integer("epochs", ppo.epochs);
  f.integer("minibatch", ppo.minibatch);
  f.integer("rollout_steps", ppo.rollout_steps);
  f.integer("num_envs", ppo.num_envs);
  f.number("entropy_coeff", ppo.entropy_coeff);
  f.number("value_coeff", ppo.value_coeff);
  f.integer("total_steps", ppo.total_steps);
  f.number("lr", ppo.lr);
  f.number("max_grad_norm", ppo.max_grad_norm);
  f.finish();
}

void read_transformer(const nlohmann::json& j, nn::TransformerConfig& t) {
  Fields f(j, "adaptation.transformer");
  f.integer("model_dim", t.model_dim);
  f.integer("num_heads", t.num_heads);
  f.integer("num_layers", t.num_layers);
  f.integer("feedforward_dim", t.feedforward_dim);
  f.integer("history_len", t.history_len);
  f.finish();
}

void read_cnn(const nlohmann::json& j, nn::CnnConfig& c) {
  Fields f(j, "adaptation.cnn");
  f.integer("channels", c.channels);
  f.integer("kernel", c.kernel);
  f.integer("history_len", c.history_len);
  f.finish();
}

void read_adaptation(const nlohmann::json& j, AdaptationConfig& a) {
  Fields f(j, "adaptation");
  std::string enc = a.encoder == EncoderKind::Transformer ? "transformer" : "cnn";
  f.text("encoder", enc);
  if (enc == "transformer")
    a.encoder = EncoderKind::Transformer;
  else if (enc == "cnn")
    a.encoder = EncoderKind::Cnn;
  else
    fail(ErrorCode::ValidationError, "adaptation.encoder must be \"transformer\" or \"cnn\"");
  if (const auto* t = f.object("transformer")) read_transformer(*t, a.transformer);
  if (const auto* c = f.object("cnn")) read_cnn(*c, a.cnn);
  f.integer("total_steps", a.total_steps);
  f.number("lr", a.lr);
  f.integer("batch_windows", a.batch_windows);
  f.integer("window_stride", a.window_stride);
  f.integer("num_envs", a.num_envs);
  f.integer("steps_per_iter", a.steps_per_iter);
  f.integer("updates_per_iter", a.updates_per_iter);
  f.integer("replay_capacity", a.replay_capacity);
  f.integer("holdout_every", a.holdout_every);
  f.integer("holdout_capacity", a.holdout_capacity);
  f.number("max_grad_norm", a.max_grad_norm);
  f.finish();
}

void read_pid(const nlohmann::json& j, PidGains& g) {
  Fields f(j, "pid");
  f.vec3("kp_pos", g.kp_pos);
  f.vec3("kd_pos", g.kd_pos);
  f.vec3("ki_pos", g.ki_pos);
  f.number("integral_limit", g.integral_limit);
  f.number("kp_att", g.kp_att);
  f.number("kd_att", g.kd_att);
  f.number("kp_yaw", g.kp_yaw);
  f.number("kd_yaw", g.kd_yaw);
  f.finish();
}

void read_eval(const nlohmann::json& j, EvalSettings& e) {
  Fields f(j, "eval");
  f.number("final_window_s", e.criteria.final_window_s);
  f.number("mean_error_threshold_m", e.criteria.mean_error_threshold_m);
  f.integer("episodes", e.episodes);
  f.finish();
}

nlohmann::json range_json(const Range& r) { return {r.lo, r.hi}; }
nlohmann::json vec3_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

void EvalSettings::validate() const {
  criteria.validate();
  require(episodes >= 1, ErrorCode::InvalidConfig, "eval.episodes must be >= 1");
}

void RunConfig::validate() const {
  require(version == kConfigVersion, ErrorCode::ValidationError,
          "version must be " + std::to_string(kConfigVersion));
  require(!output_dir.empty(), ErrorCode::ValidationError, "output_dir must not be empty");
  env.validate();
  ppo.validate();
  adaptation.validate();
  pid.validate();
  eval.validate();
}

RunConfig config_from_json(const nlohmann::json& doc) {
  RunConfig cfg;
  Fields f(doc, "");
  const auto* version = f.take("version");
  require(version != nullptr, ErrorCode::ValidationError, "config is missing \"version\"");
  require(version->is_number_integer(), ErrorCode::ValidationError,
          "version must be an integer");
  cfg.version = version->get<int>();
  f.seed_value("seed", cfg.seed);
  f.text("output_dir", cfg.output_dir);
  if (const auto* j = f.object("env")) read_env(*j, cfg.env);
  if (const auto* j = f.object("ppo")) read_ppo(*j, cfg.ppo);
  if (const auto* j = f.object("adaptation")) read_adaptation(*j, cfg.adaptation);
  if (const auto* j = f.object("pid")) read_pid(*j, cfg.pid);
  if (const auto* j = f.object("eval")) read_eval(*j, cfg.eval);
  f.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open config " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, "config " + path + ": " + e.what());
  }
  return config_from_json(doc);
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  const QuadrotorParams& p = cfg.env.nominal;
  nlohmann::json doc;
  doc["version"] = cfg.version;
  doc["seed"] = cfg.seed;
  doc["output_dir"] = cfg.output_dir;
  doc["env"] = {
      {"episode_length_s", cfg.env.episode_length_s},
      {"control_rate_hz", cfg.env.control_rate_hz},
      {"physics_dt_s", cfg.env.physics_dt_s},
      {"nominal",
       {{"mass", p.mass},
        {"inertia", vec3_json(p.inertia_diag)},
        {"arm_length", p.arm_length},
        {"thrust_coeff", p.thrust_coeff},
        {"torque_coeff", p.torque_coeff},
        {"motor_time_const", p.motor_time_const},
        {"max_rotor_speed", p.max_rotor_speed},
        {"gravity", p.gravity}}},
      {"mass_range", range_json(cfg.env.mass_range)},
      {"arm_length_range", range_json(cfg.env.arm_length_range)},
      {"k_f_range", range_json(cfg.env.k_f_range)},
      {"inertia_xx_range", range_json(cfg.env.inertia_xx_range)},
      {"inertia_yy_range", range_json(cfg.env.inertia_yy_range)},
      {"inertia_zz_range", range_json(cfg.env.inertia_zz_range)},
      {"motor_time_const_range", range_json(cfg.env.motor_time_const_range)},
      {"eta_range", range_json(cfg.env.eta_range)},
      {"num_faulted", cfg.env.num_faulted},
      {"onset_range", range_json(cfg.env.onset_range)},
      {"target_mode", cfg.env.target_mode == TargetMode::Hover ? "hover" : "waypoints"},
      {"hover_position", vec3_json(cfg.env.hover_position)},
      {"waypoint_half_side", cfg.env.waypoint_half_side},
      {"w_position", cfg.env.w_position},
      {"w_velocity", cfg.env.w_velocity},
      {"w_body_rates", cfg.env.w_body_rates},
      {"w_action_rate", cfg.env.w_action_rate},
      {"crash_penalty", cfg.env.crash_penalty},
      {"tilt_cos_min", cfg.env.tilt_cos_min},
      {"position_bound_m", cfg.env.position_bound_m},
      {"spawn_offset_m", cfg.env.spawn_offset_m},
  };
  doc["ppo"] = {
      {"gamma", cfg.ppo.gamma},
      {"lambda", cfg.ppo.lambda},
      {"clip_eps", cfg.ppo.clip_eps},
      {"epochs", cfg.ppo.epochs},
      {"minibatch", cfg.ppo.minibatch},
      {"rollout_steps", cfg.ppo.rollout_steps},
      {"num_envs", cfg.ppo.num_envs},
      {"entropy_coeff", cfg.ppo.entropy_coeff},
      {"value_coeff", cfg.ppo.value_coeff},
      {"total_steps", cfg.ppo.total_steps},
      {"lr", cfg.ppo.lr},
      {"max_grad_norm", cfg.ppo.max_grad_norm},
  };
  doc["adaptation"] = {
      {"encoder", cfg.adaptation.encoder == EncoderKind::Transformer ? "transformer" : "cnn"},
      {"transformer",
       {{"model_dim", cfg.adaptation.transformer.model_dim},
        {"num_heads", cfg.adaptation.transformer.num_heads},
        {"num_layers", cfg.adaptation.transformer.num_layers},
        {"feedforward_dim", cfg.adaptation.transformer.feedforward_dim},
        {"history_len", cfg.adaptation.transformer.history_len}}},
      {"cnn",
       {{"channels", cfg.adaptation.cnn.channels},
        {"kernel", cfg.adaptation.cnn.kernel},
        {"history_len", cfg.adaptation.cnn.history_len}}},
      {"total_steps", cfg.adaptation.total_steps},
      {"lr", cfg.adaptation.lr},
      {"batch_windows", cfg.adaptation.batch_windows},
      {"window_stride", cfg.adaptation.window_stride},
      {"num_envs", cfg.adaptation.num_envs},
      {"steps_per_iter", cfg.adaptation.steps_per_iter},
      {"updates_per_iter", cfg.adaptation.updates_per_iter},
      {"replay_capacity", cfg.adaptation.replay_capacity},
      {"holdout_every", cfg.adaptation.holdout_every},
      {"holdout_capacity", cfg.adaptation.holdout_capacity},
      {"max_grad_norm", cfg.adaptation.max_grad_norm},
  };
  doc["pid"] = {
      {"kp_pos", vec3_json(cfg.pid.kp_pos)},
      {"kd_pos", vec3_json(cfg.pid.kd_pos)},
      {"ki_pos", vec3_json(cfg.pid.ki_pos)},
      {"integral_limit", cfg.pid.integral_limit},
      {"kp_att", cfg.pid.kp_att},
      {"kd_att", cfg.pid.kd_att},
      {"kp_yaw", cfg.pid.kp_yaw},
      {"kd_yaw", cfg.pid.kd_yaw},
  };
  doc["eval"] = {
      {"final_window_s", cfg.eval.criteria.final_window_s},
      {"mean_error_threshold_m", cfg.eval.criteria.mean_error_threshold_m},
      {"episodes", cfg.eval.episodes},
  };
  return doc;
}

EnvConfig env_with_overrides(const EnvConfig& base, const nlohmann::json& patch) {
  EnvConfig env = base;
  read_env(patch, env);
  env.validate();
  return env;
}

void apply_set_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorCode::ValidationError,
          "--set expects key.path=value, got \"" + assignment + "\"");
  std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  for (char& c : path)
    if (c == '.') c = '/';
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, /*allow_exceptions=*/false);
  if (parsed.is_discarded()) parsed = value;  // bare words are strings
  try {
    doc[nlohmann::json::json_pointer("/" + path)] = parsed;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ValidationError, "--set " + assignment + ": " + e.what());
  }
}

}  // namespace ftc
