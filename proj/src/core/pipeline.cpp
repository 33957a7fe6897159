#include "core/pipeline.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include "core/nn/checkpoint.hpp"

namespace ftc {

int resolve_threads(int requested) {
  int threads = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  if (const char* cap_str = std::getenv("FTC_THREADS")) {
    const int cap = std::atoi(cap_str);
    if (cap > 0 && cap < threads) threads = cap;
  }
  return threads;
}

Phase1Result pipeline_train_phase1(const RunConfig& cfg, const std::string& run_dir,
                                   int threads) {
  cfg.validate();
  PolicyConfig pcfg;
  Phase1Result res = train_phase1(run_dir, cfg.env, pcfg, cfg.ppo, cfg.seed, threads);
  write_run_manifest(run_dir, cfg, "train-phase1",
                     {{res.checkpoint_prefix, nn::checkpoint_hash(res.checkpoint_prefix)}});
  return res;
}

Phase2Result pipeline_train_phase2(const RunConfig& cfg, const std::string& phase1_prefix,
                                   const std::string& run_dir, int threads) {
  cfg.validate();
  require(!phase1_prefix.empty(), ErrorCode::MissingModel,
          "train-phase2 needs a phase-1 checkpoint prefix");
  Phase2Result res = train_phase2(run_dir, phase1_prefix, cfg.env, cfg.adaptation, cfg.seed,
                                  threads);
  write_run_manifest(run_dir, cfg, "train-phase2",
                     {{phase1_prefix, nn::checkpoint_hash(phase1_prefix)},
                      {res.checkpoint_prefix, nn::checkpoint_hash(res.checkpoint_prefix)}});
  return res;
}

namespace {

const char* cause_name(EpisodeStatus::Cause c) {
  switch (c) {
    case EpisodeStatus::Cause::None: return "none";
    case EpisodeStatus::Cause::Tilt: return "tilt";
    case EpisodeStatus::Cause::OutOfBounds: return "oob";
    case EpisodeStatus::Cause::NonFinite: return "nonfinite";
  }
  return "none";
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  if (v.empty()) return;
  double s = 0.0;
  for (double x : v) s += x;
  mean = s / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  sd = std::sqrt(var / static_cast<double>(v.size()));
}

std::string flatten_params(const nlohmann::json& patch) {
  std::vector<std::string> parts;
  std::function<void(const std::string&, const nlohmann::json&)> walk =
      [&](const std::string& prefix, const nlohmann::json& v) {
        if (v.is_object()) {
          for (auto it = v.begin(); it != v.end(); ++it)
            walk(prefix.empty() ? it.key() : prefix + "." + it.key(), it.value());
          return;
        }
        std::string s = v.dump();
        for (char& c : s)
          if (c == ',') c = ' ';
        parts.push_back(prefix + "=" + s);
      };
  walk("", patch);
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ';';
    out += parts[i];
  }
  return out;
}

}  // namespace

nlohmann::json EvalSummary::to_json() const {
  return {{"mode", mode},
          {"episodes", episodes},
          {"success_rate", success_rate},
          {"crash_rate", crash_rate},
          {"rmse_mean_success", rmse_mean_success},
          {"rmse_std_success", rmse_std_success},
          {"rmse_mean_all", rmse_mean_all},
          {"rmse_std_all", rmse_std_all},
          {"csv", csv_path}};
}

EvalSummary pipeline_eval(const RunConfig& cfg, ControllerMode mode,
                          const std::string& checkpoint_prefix, const std::string& run_dir,
                          int threads) {
  cfg.validate();
  std::optional<HybridArtifacts> artifacts;
  if (!checkpoint_prefix.empty()) artifacts = HybridArtifacts::load(checkpoint_prefix);
  const HybridArtifacts* art = artifacts ? &*artifacts : nullptr;
  { Controller probe(mode, cfg.pid, art); }  // mode/artifact mismatch fails here, not mid-run

  const int n = cfg.eval.episodes;
  std::vector<EpisodeMetrics> results(n);
  std::vector<uint64_t> seeds(n);
  for (int i = 0; i < n; ++i) seeds[i] = derive_seed(cfg.seed, {0xEA1, static_cast<uint64_t>(i)});

  auto run_one = [&](int i) {
    Scenario sc;
    sc.env = cfg.env;
    sc.mode = mode;
    const std::string log_path =
        run_dir + "/logs/" + std::string(mode_name(mode)) + "_ep" + std::to_string(i) + ".jsonl";
    try {
      results[i] = run_episode(sc, art, cfg.pid, seeds[i], cfg.eval.criteria, log_path);
    } catch (const std::exception&) {
      results[i] = EpisodeMetrics{};
      results[i].crashed = true;
      results[i].crash_cause = EpisodeStatus::Cause::NonFinite;
    }
  };
  const int workers = std::min(resolve_threads(threads), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w]() {
        for (int i = w; i < n; i += workers) run_one(i);
      });
    for (auto& t : pool) t.join();
  }

  EvalSummary s;
  s.mode = mode_name(mode);
  s.episodes = n;
  s.csv_path = run_dir + "/eval_" + s.mode + ".csv";
  std::ofstream csv(s.csv_path, std::ios::trunc);
  require(csv.good(), ErrorCode::IoError, "cannot write " + s.csv_path);
  csv << "episode,seed,success,crashed,crash_cause,rmse_post_onset,mean_pos_error,"
         "final_window_mean_error,onset_time,steps,log\n";
  std::vector<double> rmse_success, rmse_all;
  int successes = 0, crashes = 0;
  for (int i = 0; i < n; ++i) {
    const EpisodeMetrics& m = results[i];
    successes += m.success ? 1 : 0;
    crashes += m.crashed ? 1 : 0;
    if (m.success) rmse_success.push_back(m.rmse_post_onset);
    if (!std::isnan(m.rmse_post_onset)) rmse_all.push_back(m.rmse_post_onset);
    csv << i << ',' << seeds[i] << ',' << (m.success ? 1 : 0) << ',' << (m.crashed ? 1 : 0)
        << ',' << cause_name(m.crash_cause) << ',' << m.rmse_post_onset << ','
        << m.mean_pos_error << ',' << m.final_window_mean_error << ',' << m.onset_time << ','
        << m.steps << ',' << m.log_path << '\n';
  }
  s.success_rate = static_cast<double>(successes) / n;
  s.crash_rate = static_cast<double>(crashes) / n;
  mean_std(rmse_success, s.rmse_mean_success, s.rmse_std_success);
  mean_std(rmse_all, s.rmse_mean_all, s.rmse_std_all);

  nlohmann::json hashes = nlohmann::json::object();
  if (art != nullptr) hashes[art->checkpoint_prefix] = art->checkpoint_sha256;
  write_run_manifest(run_dir, cfg, "eval", hashes);
  {
    std::ofstream out(run_dir + "/eval_" + s.mode + "_summary.json", std::ios::trunc);
    out << s.to_json().dump(2) << '\n';
  }
  return s;
}

std::vector<SweepRow> pipeline_sweep(const RunConfig& cfg, const std::string& grid_path,
                                     const std::vector<ControllerMode>& modes,
                                     const std::string& phase1_prefix,
                                     const std::string& transformer_prefix,
                                     const std::string& cnn_prefix, const std::string& run_dir,
                                     int threads) {
  cfg.validate();
  require(!modes.empty(), ErrorCode::InvalidConfig, "sweep needs at least one mode");

  std::vector<SweepCell> cells;
  if (grid_path.empty()) {
    cells.push_back({"default", cfg.env, ""});
  } else {
    std::ifstream in(grid_path);
    require(in.good(), ErrorCode::MissingArtifact, "cannot open grid " + grid_path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, "grid " + grid_path + ": " + e.what());
    }
    require(doc.is_object() && doc.contains("cells") && doc["cells"].is_array() &&
                !doc["cells"].empty(),
            ErrorCode::ValidationError, "grid file needs a non-empty \"cells\" array");
    for (const auto& c : doc["cells"]) {
      require(c.is_object() && c.contains("id") && c["id"].is_string(),
              ErrorCode::ValidationError, "every grid cell needs a string \"id\"");
      SweepCell cell;
      cell.id = c["id"].get<std::string>();
      const nlohmann::json patch =
          c.contains("env") ? c["env"] : nlohmann::json::object();
      for (auto it = c.begin(); it != c.end(); ++it)
        require(it.key() == "id" || it.key() == "env", ErrorCode::ValidationError,
                "unknown grid cell field \"" + it.key() + "\"");
      cell.env = env_with_overrides(cfg.env, patch);
      cell.params = flatten_params(patch);
      cells.push_back(std::move(cell));
    }
  }

  std::optional<HybridArtifacts> phase1, transformer, cnn;
  if (!phase1_prefix.empty()) phase1 = HybridArtifacts::load(phase1_prefix);
  if (!transformer_prefix.empty()) transformer = HybridArtifacts::load(transformer_prefix);
  if (!cnn_prefix.empty()) cnn = HybridArtifacts::load(cnn_prefix);
  ArtifactSet set;
  set.phase1 = phase1 ? &*phase1 : nullptr;
  set.transformer = transformer ? &*transformer : nullptr;
  set.cnn = cnn ? &*cnn : nullptr;

  const std::string csv_path = run_dir + "/sweep.csv";
  std::vector<SweepRow> rows =
      sweep(cells, modes, cfg.eval.episodes, cfg.seed, cfg.eval.criteria, cfg.pid, set,
            csv_path, /*log_dir=*/"", resolve_threads(threads));

  nlohmann::json hashes = nlohmann::json::object();
  for (const auto* a : {set.phase1, set.transformer, set.cnn})
    if (a != nullptr) hashes[a->checkpoint_prefix] = a->checkpoint_sha256;
  write_run_manifest(run_dir, cfg, "sweep", hashes);
  return rows;
}

ReplayResult pipeline_replay(const std::string& log_path) { return replay_log(log_path); }

}  // namespace ftc
