#pragma once

// Operator commands: train, normtable, simulate, serve, aggregate and
// export-saliency. Exit codes: 0 success, 1 invalid input or usage,
// 2 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xrl/aggregate.hpp"
#include "xrl/config.hpp"
#include "xrl/error.hpp"
#include "xrl/io.hpp"
#include "xrl/png.hpp"
#include "xrl/saliency.hpp"
#include "xrl/scenario.hpp"
#include "xrl/server.hpp"
#include "xrl/service.hpp"
#include "xrl/study.hpp"
#include "xrl/training.hpp"

#ifndef XRL_DEFAULT_DATA_DIR
#define XRL_DEFAULT_DATA_DIR "data"
#endif

namespace xrl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitRuntime = 2;

inline int exit_code_for(const std::exception& e) {
  if (const auto* x = dynamic_cast<const Error*>(&e)) {
    const std::string c = x->category();
    if (c == "config" || c == "parse" || c == "validation" || c == "precondition" ||
        c == "not_found" || c == "load" || c == "conflict")
      return kExitInvalid;
  }
  return kExitRuntime;
}

/// XRL_DATA_DIR when set, else the build-time data directory.
inline std::filesystem::path data_dir() {
  if (const char* env = std::getenv("XRL_DATA_DIR"); env && *env) return env;
  return XRL_DEFAULT_DATA_DIR;
}

/// A path as given when it exists, else the same relative path under data_dir().
inline std::filesystem::path resolve_input(const std::filesystem::path& p) {
  if (p.empty() || std::filesystem::exists(p) || p.is_absolute()) return p;
  const auto alt = data_dir() / p;
  return std::filesystem::exists(alt) ? alt : p;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  const std::string text = read_file(resolve_input(path));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

struct Prediction {
  std::optional<Action> action;  // empty: let the DP time out
  std::string rationale;
};

/// One line per DP: a quadrant (Q1..Q4 or AttackQn) or "-" for a timeout,
/// optionally followed by a tab and the rationale. Blank and # lines skip.
inline std::vector<Prediction> parse_predictions(const std::string& text) {
  std::vector<Prediction> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto tab = line.find('\t', first);
    std::string head = line.substr(first, tab == std::string::npos ? std::string::npos : tab - first);
    while (!head.empty() && head.back() == ' ') head.pop_back();
    Prediction p;
    if (tab != std::string::npos) p.rationale = line.substr(tab + 1);
    if (head != "-") {
      try {
        p.action = parse_action(head);
      } catch (const ParseError& e) {
        throw ValidationError("predictions line " + std::to_string(n) + ": " + e.what());
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

struct SimulationResult {
  std::string log;
  std::string summary_csv;
};

/// Runs a headless session with scripted predictions. The event log is the
/// one a live session with the same inputs would write.
inline SimulationResult simulate(const StudyMaterials& materials, Treatment treatment,
                                 const std::vector<Prediction>& predictions, bool deterministic,
                                 const SessionConfig& cfg = {}) {
  if (predictions.size() != materials.scenario->dp_count())
    throw ValidationError("predictions file has " + std::to_string(predictions.size()) +
                          " entries for " + std::to_string(materials.scenario->dp_count()) + " DPs");
  auto offset = std::make_shared<std::int64_t>(0);
  Clock base = deterministic ? fixed_clock(0) : system_clock_ms();
  Clock clock = [base, offset] { return base() + *offset; };
  std::string id = deterministic ? "sim-" + std::string(name_of(treatment)) + "-" +
                                       scenario_fingerprint(*materials.scenario).substr(0, 8)
                                 : random_session_id();
  Session s = Session::create(id, treatment, materials, cfg, clock);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    if (p.action) {
      s.submit(name_of(*p.action), p.rationale);
    } else {
      *offset += i == 0 ? cfg.first_deadline_ms : cfg.deadline_ms;
      s.poll();
    }
    s.advance();
  }
  return {s.log_jsonl(), to_csv(aggregate({s.events()}))};
}

inline StudyMaterials load_materials(const std::filesystem::path& agent_path,
                                     const std::filesystem::path& scenario_path,
                                     const std::optional<std::filesystem::path>& norm_path) {
  StudyMaterials m;
  auto agent = std::make_shared<DecomposedAgent>(load_checkpoint(resolve_input(agent_path)));
  m.checkpoint_fingerprint = checkpoint_fingerprint(*agent);
  m.agent = std::move(agent);
  const auto sp = resolve_input(scenario_path);
  m.scenario = std::make_shared<Scenario>(load_scenario(sp));
  m.scenario_name = sp.stem().string();
  if (norm_path) m.norm_table = std::make_shared<NormTable>(load_norm_table(resolve_input(*norm_path)));
  return m;
}

inline std::string metrics_csv(const std::vector<EpisodeMetrics>& metrics) {
  std::string out = "episode,epsilon,steps,total_return";
  for (auto name : kRewardTypeNames) out += "," + std::string(name);
  out += "\n";
  for (const auto& m : metrics) {
    out += std::to_string(m.episode) + "," + detail::shortest(m.epsilon) + "," +
           std::to_string(m.steps) + "," + detail::shortest(m.total_return);
    for (double v : m.component_return.values) out += "," + detail::shortest(v);
    out += "\n";
  }
  return out;
}

/// Writes every (kind, reward type, action) map of one DP as PNG plus a JSON
/// sidecar with the raw maxima.
inline void export_saliency(const StudyMaterials& m, int dp_number, const std::filesystem::path& dir,
                            const PerturbationOptions& opt = {}) {
  const auto frozen = freeze_scenario(*m.scenario, *m.agent, GameRules{});
  if (dp_number < 1 || static_cast<std::size_t>(dp_number) > frozen.size())
    throw ValidationError("DP" + std::to_string(dp_number) + " is not in the scenario");
  if (!m.norm_table) throw ValidationError("export-saliency needs --normtable");
  const FrozenDp& f = frozen[static_cast<std::size_t>(dp_number - 1)];
  const SaliencyStack st = saliency_stack(*m.agent, f.shown, opt);
  std::filesystem::create_directories(dir);
  nlohmann::json maxima = nlohmann::json::array();
  for (PerturbationKind k : kAllPerturbations)
    for (RewardType c : kAllRewardTypes)
      for (Action a : kAllActions) {
        const SaliencyMap raw = st.map(k, c, a);
        const std::string stem = std::string(name_of(k)) + "_" + std::string(name_of(c)) + "_" +
                                 std::string(name_of(target_of(a)));
        write_file_atomic(dir / (stem + ".png"), encode_png(colorize(normalize(raw, *m.norm_table))));
        maxima.push_back({{"kind", std::string(name_of(k))},
                          {"reward_type", std::string(name_of(c))},
                          {"action", std::string(name_of(a))},
                          {"file", stem + ".png"},
                          {"raw_max", raw.max()},
                          {"table_max", (*m.norm_table)(k, c, a)}});
      }
  write_file_atomic(dir / "maxima.json",
                    nlohmann::json{{"dp", dp_number}, {"agent_action", std::string(name_of(f.agent_action))},
                                   {"maps", maxima}}
                            .dump(2) +
                        "\n");
}

inline std::pair<std::string, unsigned short> parse_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ValidationError("--addr must be host:port");
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw ValidationError("--addr port is not a number");
  }
  if (port < 0 || port > 65535) throw ValidationError("--addr port out of range");
  return {addr.substr(0, colon), static_cast<unsigned short>(port)};
}

/// Parses and executes one command. `out` receives data, `err` diagnostics.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Decomposed-reward SARSA agent, saliency explanations and study harness", "xrl"};
  app.require_subcommand(0, 1);
  bool print_defaults = false;
  app.add_flag("--print-defaults", print_defaults, "Print the default training configuration");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train an agent");
  std::string train_config_path, train_out, metrics_out;
  std::optional<std::int64_t> episodes_override;
  std::optional<std::uint64_t> seed_override;
  bool train_print_defaults = false;
  train_cmd->add_option("--config", train_config_path, "Training config (JSON)");
  train_cmd->add_option("--out", train_out, "Checkpoint output path");
  train_cmd->add_option("--episodes", episodes_override, "Override the episode count");
  train_cmd->add_option("--seed", seed_override, "Override the seed");
  train_cmd->add_option("--metrics", metrics_out, "Per-episode metrics CSV output");
  train_cmd->add_flag("--print-defaults", train_print_defaults, "Print the default configuration");

  // normtable
  auto* norm_cmd = app.add_subcommand("normtable", "Build a saliency normalization table");
  std::string norm_agent, norm_out, norm_config;
  std::int64_t norm_episodes = 500, norm_first = 0;
  std::uint64_t norm_seed = 1;
  norm_cmd->add_option("--agent", norm_agent, "Checkpoint")->required();
  norm_cmd->add_option("--episodes", norm_episodes, "Greedy episodes to sample")->capture_default_str();
  norm_cmd->add_option("--first-episode", norm_first, "First episode index")->capture_default_str();
  norm_cmd->add_option("--seed", norm_seed, "Seed")->capture_default_str();
  norm_cmd->add_option("--config", norm_config, "Training config whose generator/rules to use");
  norm_cmd->add_option("--out", norm_out, "Output JSON")->required();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Run a headless scripted session");
  std::string sim_agent, sim_scenario, sim_treatment, sim_predictions, sim_out, sim_norm, sim_summary;
  bool deterministic = false;
  sim_cmd->add_option("--agent", sim_agent, "Checkpoint")->required();
  sim_cmd->add_option("--scenario", sim_scenario, "Scenario JSON")->required();
  sim_cmd->add_option("--treatment", sim_treatment, "Control, Saliency, Rewards or Everything")->required();
  sim_cmd->add_option("--predictions", sim_predictions, "One quadrant per DP")->required();
  sim_cmd->add_option("--out", sim_out, "Event log output (JSONL)")->required();
  sim_cmd->add_option("--normtable", sim_norm, "Norm table (Saliency/Everything)");
  sim_cmd->add_option("--summary", sim_summary, "Accuracy CSV output (default stdout)");
  sim_cmd->add_flag("--deterministic", deterministic, "Fixed clock and session id");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP/WebSocket API");
  std::string addr = "127.0.0.1:8080", serve_agent, scenario_dir, serve_norm, log_dir, static_dir;
  serve_cmd->add_option("--addr", addr, "host:port")->capture_default_str();
  serve_cmd->add_option("--agent", serve_agent, "Checkpoint")->required();
  serve_cmd->add_option("--scenario-dir", scenario_dir, "Directory of scenario JSON files");
  serve_cmd->add_option("--normtable", serve_norm, "Norm table");
  serve_cmd->add_option("--log-dir", log_dir, "Session log directory")->capture_default_str();
  serve_cmd->add_option("--static-dir", static_dir, "Static UI assets");

  // aggregate
  auto* agg_cmd = app.add_subcommand("aggregate", "Per-DP accuracy over session logs");
  std::string agg_logs, agg_out;
  agg_cmd->add_option("--logs", agg_logs, "Directory of *.jsonl logs")->required();
  agg_cmd->add_option("--out", agg_out, "CSV output (default stdout)");

  // export-saliency
  auto* exp_cmd = app.add_subcommand("export-saliency", "Write the saliency PNGs of one DP");
  std::string exp_agent, exp_scenario, exp_norm, exp_dir;
  int exp_dp = 1;
  exp_cmd->add_option("--agent", exp_agent, "Checkpoint")->required();
  exp_cmd->add_option("--scenario", exp_scenario, "Scenario JSON")->required();
  exp_cmd->add_option("--dp", exp_dp, "DP number (1-based)")->capture_default_str();
  exp_cmd->add_option("--normtable", exp_norm, "Norm table")->required();
  exp_cmd->add_option("--out-dir", exp_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitInvalid;
  }

  try {
    if (print_defaults || train_print_defaults) {
      out << to_json(TrainConfig{}).dump(2) << "\n";
      return kExitOk;
    }
    if (*train_cmd) {
      if (train_config_path.empty() || train_out.empty())
        throw ValidationError("train needs --config and --out");
      TrainConfig cfg = load_train_config(train_config_path);
      if (episodes_override) cfg.episodes = *episodes_override;
      if (seed_override) cfg.seed = *seed_override;
      cfg.validate();
      const std::int64_t every = std::max<std::int64_t>(1, cfg.episodes / 10);
      double window = 0.0;
      TrainResult res = train(cfg, [&](const EpisodeMetrics& m, const DecomposedAgent&) {
        window += m.total_return;
        if ((m.episode + 1) % every == 0) {
          err << "episode " << m.episode + 1 << "/" << cfg.episodes << " epsilon " << m.epsilon
              << " mean return " << window / static_cast<double>(every) << "\n";
          window = 0.0;
        }
      });
      save_checkpoint(res.agent, train_out);
      if (!metrics_out.empty()) write_file_atomic(metrics_out, metrics_csv(res.metrics));
      err << "wrote " << train_out << "\n";
      return kExitOk;
    }
    if (*norm_cmd) {
      const DecomposedAgent agent = load_checkpoint(resolve_input(norm_agent));
      NormTableConfig nc;
      const TrainConfig tc = norm_config.empty() ? agent.train_config() : load_train_config(norm_config);
      nc.generator = tc.generator;
      nc.rules = tc.rules;
      nc.max_steps_per_episode = tc.max_steps_per_episode;
      nc.episodes = norm_episodes;
      nc.first_episode = norm_first;
      nc.seed = norm_seed;
      save_norm_table(build_norm_table(agent, nc), norm_out);
      err << "wrote " << norm_out << "\n";
      return kExitOk;
    }
    if (*sim_cmd) {
      const Treatment t = parse_treatment(sim_treatment);
      const auto preds = parse_predictions(read_file(resolve_input(sim_predictions)));
      const StudyMaterials m =
          load_materials(sim_agent, sim_scenario,
                         sim_norm.empty() ? std::nullopt : std::optional<std::filesystem::path>(sim_norm));
      const SimulationResult r = simulate(m, t, preds, deterministic);
      write_file_atomic(sim_out, r.log);
      if (sim_summary.empty()) out << r.summary_csv;
      else write_file_atomic(sim_summary, r.summary_csv);
      return kExitOk;
    }
    if (*serve_cmd) {
      const auto [host, port] = parse_address(addr);
      ServiceConfig sc;
      sc.scenario_dir = scenario_dir.empty() ? data_dir() : std::filesystem::path(scenario_dir);
      sc.log_dir = log_dir.empty() ? data_dir() / "logs" : std::filesystem::path(log_dir);
      sc.static_dir = static_dir;
      auto agent = std::make_shared<const DecomposedAgent>(load_checkpoint(resolve_input(serve_agent)));
      std::shared_ptr<const NormTable> table;
      if (!serve_norm.empty())
        table = std::make_shared<const NormTable>(load_norm_table(resolve_input(serve_norm)));
      Service service(sc, agent, table);
      const std::size_t restored = service.restore();
      Server server(service, host, port);
      server.stop_on_signals();
      err << "listening on " << host << ":" << server.port() << " (" << restored
          << " sessions restored)\n";
      server.run();
      return kExitOk;
    }
    if (*agg_cmd) {
      const std::string csv = to_csv(aggregate(read_log_dir(agg_logs)));
      if (agg_out.empty()) out << csv;
      else write_file_atomic(agg_out, csv);
      return kExitOk;
    }
    if (*exp_cmd) {
      const StudyMaterials m = load_materials(exp_agent, exp_scenario, std::filesystem::path(exp_norm));
      export_saliency(m, exp_dp, exp_dir);
      err << "wrote " << exp_dir << "\n";
      return kExitOk;
    }
    err << app.help();
    return kExitInvalid;
  } catch (const std::exception& e) {
    const auto* x = dynamic_cast<const Error*>(&e);
    err << "error" << (x ? std::string(" [") + x->category() + "]" : std::string()) << ": " << e.what()
        << "\n";
    return exit_code_for(e);
  }
}

}  // namespace xrl
