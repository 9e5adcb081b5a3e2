#pragma once

// Scripted decision-point sequences. File format (JSON):
//
//   {"version": 1,
//    "tasks": [[dp, dp, ...], ...]}
//   dp = {"quadrants": {"Q1": {"kind": "BigFort", "allegiance": "Enemy", "hp": 21}, ...},
//         "agent_hp": 100}            // agent_hp optional
//
// Canonical form: keys sorted, 2-space indent, LF line endings, trailing LF,
// integral hp values written as integers.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrl/error.hpp"
#include "xrl/game.hpp"
#include "xrl/io.hpp"

namespace xrl {

struct ObjectSpec {
  ObjectKind kind = ObjectKind::SmallFort;
  Allegiance allegiance = Allegiance::Enemy;
  double hp = kMaxHp;
  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

struct DecisionPointSpec {
  std::array<std::optional<ObjectSpec>, kNumQuadrants> quadrants;
  std::optional<double> agent_hp;
  friend bool operator==(const DecisionPointSpec&, const DecisionPointSpec&) = default;
};

struct Scenario {
  std::vector<std::vector<DecisionPointSpec>> tasks;

  std::size_t dp_count() const {
    std::size_t n = 0;
    for (const auto& t : tasks) n += t.size();
    return n;
  }
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

inline constexpr int kScenarioVersion = 1;
inline constexpr std::size_t kMinDpsPerTask = 3;
inline constexpr std::size_t kMaxDpsPerTask = 4;

/// Builds the game state shown at a scripted DP. Object ids are 1.. in
/// quadrant order.
inline GameState make_state(const DecisionPointSpec& dp, double agent_hp, int task_index,
                            int dp_index, double cumulative_score) {
  GameState s;
  s.agent_hp = agent_hp;
  s.task_index = task_index;
  s.dp_index = dp_index;
  s.cumulative_score = cumulative_score;
  for (std::size_t q = 0; q < kNumQuadrants; ++q)
    if (const auto& o = dp.quadrants[q]) s.place(o->kind, o->allegiance, o->hp, static_cast<Quadrant>(q));
  return s;
}

/// Throws ValidationError naming the first offending DP (1-based, global order).
inline void validate_scenario(const Scenario& sc) {
  if (sc.tasks.empty()) throw ValidationError("scenario has no tasks");
  std::size_t dp_number = 0;
  for (std::size_t t = 0; t < sc.tasks.size(); ++t) {
    const auto& task = sc.tasks[t];
    if (task.size() < kMinDpsPerTask || task.size() > kMaxDpsPerTask)
      throw ValidationError("task " + std::to_string(t + 1) + " has " +
                            std::to_string(task.size()) + " DPs, expected 3-4");
    for (const auto& dp : task) {
      ++dp_number;
      const std::string where = "DP" + std::to_string(dp_number);
      std::size_t occupied = 0;
      for (const auto& o : dp.quadrants) {
        if (!o) continue;
        ++occupied;
        if (!(o->hp > 0.0 && o->hp <= kMaxHp))
          throw ValidationError(where + ": object hp must lie in (0, 100]");
      }
      if (occupied == 0) throw ValidationError(where + ": no occupied quadrant");
      if (dp.agent_hp && !(*dp.agent_hp > 0.0 && *dp.agent_hp <= kMaxHp))
        throw ValidationError(where + ": agent_hp must lie in (0, 100]");
    }
  }
}

namespace detail {

inline nlohmann::json hp_json(double hp) {
  if (std::floor(hp) == hp && std::abs(hp) < 1e15) return static_cast<std::int64_t>(hp);
  return hp;
}

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + ": missing field '" + key + "'");
  return *it;
}

inline void only_keys(const nlohmann::json& obj, std::initializer_list<const char*> keys,
                      const std::string& path) {
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (const char* allowed : keys) known = known || k == allowed;
    if (!known) throw ParseError(path + ": unknown field '" + k + "'");
  }
}

inline double number_at(const nlohmann::json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError(path + ": expected a number");
  return v.get<double>();
}

inline std::string string_at(const nlohmann::json& v, const std::string& path) {
  if (!v.is_string()) throw ParseError(path + ": expected a string");
  return v.get<std::string>();
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& root) {
  using detail::require;
  if (!root.is_object()) throw ParseError("$: expected an object");
  detail::only_keys(root, {"version", "tasks"}, "$");
  const auto& version = require(root, "version", "$");
  if (!version.is_number_integer() || version.get<int>() != kScenarioVersion)
    throw ParseError("$.version: unsupported scenario version (expected 1)");
  const auto& tasks = require(root, "tasks", "$");
  if (!tasks.is_array()) throw ParseError("$.tasks: expected an array");

  Scenario sc;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const std::string tpath = "$.tasks[" + std::to_string(t) + "]";
    if (!tasks[t].is_array()) throw ParseError(tpath + ": expected an array of DPs");
    auto& task = sc.tasks.emplace_back();
    for (std::size_t d = 0; d < tasks[t].size(); ++d) {
      const std::string dpath = tpath + "[" + std::to_string(d) + "]";
      const auto& jdp = tasks[t][d];
      if (!jdp.is_object()) throw ParseError(dpath + ": expected an object");
      detail::only_keys(jdp, {"quadrants", "agent_hp"}, dpath);
      DecisionPointSpec dp;
      if (auto it = jdp.find("agent_hp"); it != jdp.end())
        dp.agent_hp = detail::number_at(*it, dpath + ".agent_hp");
      const auto& quads = require(jdp, "quadrants", dpath);
      if (!quads.is_object()) throw ParseError(dpath + ".quadrants: expected an object");
      for (const auto& [qname, jo] : quads.items()) {
        const std::string opath = dpath + ".quadrants." + qname;
        Quadrant q;
        try {
          q = parse_quadrant(qname);
        } catch (const ParseError&) {
          throw ParseError(opath + ": unknown quadrant (expected Q1-Q4)");
        }
        if (!jo.is_object()) throw ParseError(opath + ": expected an object");
        detail::only_keys(jo, {"kind", "allegiance", "hp"}, opath);
        ObjectSpec o;
        try {
          o.kind = parse_kind(detail::string_at(require(jo, "kind", opath), opath + ".kind"));
          o.allegiance = parse_allegiance(
              detail::string_at(require(jo, "allegiance", opath), opath + ".allegiance"));
        } catch (const ParseError& e) {
          const std::string msg = e.what();
          throw ParseError(msg.rfind(opath, 0) == 0 ? msg : opath + ": " + msg);
        }
        o.hp = detail::number_at(require(jo, "hp", opath), opath + ".hp");
        dp.quadrants[index_of(q)] = o;
      }
      task.push_back(dp);
    }
  }
  validate_scenario(sc);
  return sc;
}

inline Scenario parse_scenario(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                     e.what());
  }
  return scenario_from_json(root);
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path));
}

inline nlohmann::json to_json(const Scenario& sc) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& task : sc.tasks) {
    nlohmann::json jt = nlohmann::json::array();
    for (const auto& dp : task) {
      nlohmann::json quads = nlohmann::json::object();
      for (std::size_t q = 0; q < kNumQuadrants; ++q) {
        const auto& o = dp.quadrants[q];
        if (!o) continue;
        quads[std::string(kQuadrantNames[q])] = {{"kind", std::string(name_of(o->kind))},
                                                 {"allegiance", std::string(name_of(o->allegiance))},
                                                 {"hp", detail::hp_json(o->hp)}};
      }
      nlohmann::json jdp = {{"quadrants", quads}};
      if (dp.agent_hp) jdp["agent_hp"] = detail::hp_json(*dp.agent_hp);
      jt.push_back(std::move(jdp));
    }
    tasks.push_back(std::move(jt));
  }
  return {{"version", kScenarioVersion}, {"tasks", tasks}};
}

inline std::string canonical_scenario(const Scenario& sc) { return to_json(sc).dump(2) + "\n"; }

/// FNV-1a over the canonical form; identifies a scenario in session logs.
inline std::string scenario_fingerprint(const Scenario& sc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_scenario(sc)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
  return out;
}

inline void save_scenario(const Scenario& sc, const std::filesystem::path& path) {
  write_file_atomic(path, canonical_scenario(sc));
}

}  // namespace xrl
