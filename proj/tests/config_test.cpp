#include <string>

#include "core/config.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ftc;
using namespace ftc_test;

TEST_CASE("config: a bare versioned document echoes the full default tree") {
  const RunConfig defaults;
  const RunConfig parsed = config_from_json(nlohmann::json{{"version", kConfigVersion}});
  CHECK(config_to_json(parsed) == config_to_json(defaults));
  CHECK(parsed.seed == 1);
  CHECK(parsed.ppo.total_steps == 2'000'000);
  CHECK(parsed.env.control_rate_hz == 100.0);
}

TEST_CASE("config: the version field is mandatory and checked") {
  CHECK_THROWS_WITH_AS(config_from_json(nlohmann::json::object()),
                       doctest::Contains("version"), Error);
  nlohmann::json doc{{"version", kConfigVersion + 1}};
  CHECK_THROWS_WITH_AS(config_from_json(doc), doctest::Contains("version"), Error);
}

TEST_CASE("config: unknown fields are rejected by name") {
  nlohmann::json doc{{"version", kConfigVersion}, {"foo", 1}};
  CHECK_THROWS_WITH_AS(config_from_json(doc), doctest::Contains("foo"), Error);

  nlohmann::json nested{{"version", kConfigVersion}, {"ppo", {{"gamma", 0.99}, {"bogus", 3}}}};
  CHECK_THROWS_WITH_AS(config_from_json(nested), doctest::Contains("ppo.bogus"), Error);
}

TEST_CASE("config: out-of-range values name the offending key") {
  nlohmann::json doc{{"version", kConfigVersion}, {"ppo", {{"gamma", 1.5}}}};
  CHECK_THROWS_WITH_AS(config_from_json(doc), doctest::Contains("ppo.gamma"), Error);

  nlohmann::json neg{{"version", kConfigVersion}, {"env", {{"control_rate_hz", -10.0}}}};
  CHECK_THROWS_AS(config_from_json(neg), Error);
}

TEST_CASE("config: nested values parse into the right slots") {
  nlohmann::json doc{{"version", kConfigVersion},
                     {"seed", 99},
                     {"env",
                      {{"eta_range", {0.4, 0.8}},
                       {"hover_position", {0.0, 0.0, 2.0}},
                       {"target_mode", "waypoints"}}},
                     {"ppo", {{"lr", 1e-4}, {"total_steps", 5000}}},
                     {"adaptation", {{"encoder", "cnn"}, {"cnn", {{"channels", 32}}}}}};
  const RunConfig cfg = config_from_json(doc);
  CHECK(cfg.seed == 99);
  CHECK(cfg.env.eta_range.lo == 0.4);
  CHECK(cfg.env.eta_range.hi == 0.8);
  CHECK(cfg.env.hover_position.z() == 2.0);
  CHECK(cfg.env.target_mode == TargetMode::Waypoints);
  CHECK(cfg.ppo.lr == 1e-4);
  CHECK(cfg.ppo.total_steps == 5000);
  CHECK(cfg.adaptation.encoder == EncoderKind::Cnn);
  CHECK(cfg.adaptation.cnn.channels == 32);
}

TEST_CASE("config: --set style overrides hit dotted paths") {
  nlohmann::json doc{{"version", kConfigVersion}};
  apply_set_override(doc, "ppo.gamma=0.95");
  apply_set_override(doc, "env.eta_range=[0.5,0.9]");
  apply_set_override(doc, "eval.episodes=17");
  apply_set_override(doc, "output_dir=custom_runs");
  const RunConfig cfg = config_from_json(doc);
  CHECK(cfg.ppo.gamma == 0.95);
  CHECK(cfg.env.eta_range.lo == 0.5);
  CHECK(cfg.env.eta_range.hi == 0.9);
  CHECK(cfg.eval.episodes == 17);
  CHECK(cfg.output_dir == "custom_runs");
}

TEST_CASE("config: malformed --set strings are rejected") {
  nlohmann::json doc{{"version", kConfigVersion}};
  CHECK_THROWS_AS(apply_set_override(doc, "no_equals_sign"), Error);
  CHECK_THROWS_AS(apply_set_override(doc, "=5"), Error);
  // an override can introduce a bad key; the parse stage names it
  apply_set_override(doc, "typo_key=5");
  CHECK_THROWS_WITH_AS(config_from_json(doc), doctest::Contains("typo_key"), Error);
}

TEST_CASE("config: file loading reports parse errors and missing files") {
  TempDir dir("cfg");
  CHECK_THROWS_AS(load_config(dir.str() + "/absent.json"), Error);
  const std::string bad = dir.str() + "/bad.json";
  {
    std::ofstream out(bad);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_config(bad), Error);
  const std::string good = dir.str() + "/good.json";
  {
    std::ofstream out(good);
    out << nlohmann::json{{"version", kConfigVersion}, {"seed", 5}}.dump();
  }
  CHECK(load_config(good).seed == 5);
}

TEST_CASE("config: env overrides for sweep grids reject unknown keys") {
  const RunConfig base;
  nlohmann::json patch{{"eta_range", {0.3, 0.3}}, {"mass_range", {1.2, 1.3}}};
  const EnvConfig cell = env_with_overrides(base.env, patch);
  CHECK(cell.eta_range.lo == 0.3);
  CHECK(cell.mass_range.hi == 1.3);
  CHECK(cell.control_rate_hz == base.env.control_rate_hz);

  nlohmann::json bad{{"not_a_field", 1}};
  CHECK_THROWS_WITH_AS(env_with_overrides(base.env, bad), doctest::Contains("not_a_field"),
                       Error);
}

TEST_CASE("config: round-trip through json is lossless") {
  RunConfig cfg;
  cfg.seed = 31;
  cfg.env.eta_range = {0.35, 0.65};
  cfg.ppo.lr = 2e-4;
  cfg.adaptation.encoder = EncoderKind::Cnn;
  cfg.pid.kp_att = 1.25;
  cfg.eval.episodes = 50;
  const RunConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
}
