#pragma once

// Training configuration and its JSON mapping. Field names in JSON mirror the
// struct fields; absent fields keep their defaults.

#include <cstdint>
#include <string>

#include <json.hpp>

#include "xrl/error.hpp"
#include "xrl/game.hpp"
#include "xrl/network.hpp"

namespace xrl {

struct TrainConfig {
  double gamma = 0.9;
  double learning_rate = 0.1;
  double epsilon_start = 0.9;
  double epsilon_end = 0.1;
  /// 30,000 games reproduce the original run; 2,000 is the desk default.
  std::int64_t episodes = 2000;
  std::uint64_t seed = 1;
  /// Episodes are cut (treated as terminal) after this many steps.
  std::int64_t max_steps_per_episode = 100;
  Architecture architecture;
  GeneratorConfig generator;
  GameRules rules;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
    if (!(epsilon_end >= 0.0 && epsilon_end <= epsilon_start && epsilon_start <= 1.0))
      throw ConfigError("epsilon must satisfy 0 <= epsilon_end <= epsilon_start <= 1");
    if (episodes < 0) throw ConfigError("episodes must be non-negative");
    if (max_steps_per_episode < 1) throw ConfigError("max_steps_per_episode must be >= 1");
    if (architecture.inputs != kTensorSize)
      throw ConfigError("architecture.inputs must equal the tensor size 11200");
    if (architecture.hidden == 0) throw ConfigError("architecture.hidden must be positive");
    if (!(architecture.value_scale > 0.0) || !(architecture.input_gain > 0.0))
      throw ConfigError("architecture gains must be positive");
    generator.validate();
  }

  /// Linear decay from epsilon_start (first episode) to epsilon_end (last).
  double epsilon_at(std::int64_t episode) const {
    if (episodes <= 1) return epsilon_start;
    const double frac = static_cast<double>(episode) / static_cast<double>(episodes - 1);
    return epsilon_start + (epsilon_end - epsilon_start) * frac;
  }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                           const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* a : keys) known = known || k == a;
    if (!known) throw ConfigError(std::string(where) + ": unknown field '" + k + "'");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const Architecture& a) {
  return {{"inputs", a.inputs},
          {"hidden", a.hidden},
          {"outputs", Architecture::outputs},
          {"activation", a.activation == Activation::ReLU ? "relu" : "identity"},
          {"input_gain", a.input_gain},
          {"hidden_gain", a.hidden_gain()},
          {"value_scale", a.value_scale},
          {"hidden_init_std", a.hidden_init_std},
          {"hidden_bias_init", a.hidden_bias_init},
          {"output_init_std", a.output_init_std},
          {"output_bias", a.output_bias}};
}

inline Architecture architecture_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"inputs", "hidden", "outputs", "activation", "input_gain", "hidden_gain",
                          "value_scale", "hidden_init_std", "hidden_bias_init", "output_init_std",
                          "output_bias"},
                         "architecture");
  Architecture a;
  detail::read_field(j, "inputs", a.inputs);
  detail::read_field(j, "hidden", a.hidden);
  detail::read_field(j, "input_gain", a.input_gain);
  detail::read_field(j, "value_scale", a.value_scale);
  detail::read_field(j, "hidden_init_std", a.hidden_init_std);
  detail::read_field(j, "hidden_bias_init", a.hidden_bias_init);
  detail::read_field(j, "output_init_std", a.output_init_std);
  detail::read_field(j, "output_bias", a.output_bias);
  if (auto it = j.find("outputs"); it != j.end() && it->get<std::size_t>() != Architecture::outputs)
    throw ConfigError("architecture.outputs must be 4");
  if (auto it = j.find("activation"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "relu") a.activation = Activation::ReLU;
    else if (s == "identity") a.activation = Activation::Identity;
    else throw ConfigError("architecture.activation must be 'relu' or 'identity'");
  }
  return a;
}

inline nlohmann::json to_json(const GameRules& r) {
  return {{"agent_attack", r.agent_attack},
          {"big_fort_attack", r.big_fort_attack},
          {"small_fort_attack", r.small_fort_attack},
          {"tank_attack", r.tank_attack},
          {"score_agent_as_friendly", r.score_agent_as_friendly}};
}

inline GameRules rules_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"agent_attack", "big_fort_attack", "small_fort_attack", "tank_attack",
                          "score_agent_as_friendly"},
                         "rules");
  GameRules r;
  detail::read_field(j, "agent_attack", r.agent_attack);
  detail::read_field(j, "big_fort_attack", r.big_fort_attack);
  detail::read_field(j, "small_fort_attack", r.small_fort_attack);
  detail::read_field(j, "tank_attack", r.tank_attack);
  detail::read_field(j, "score_agent_as_friendly", r.score_agent_as_friendly);
  return r;
}

inline nlohmann::json to_json(const GeneratorConfig& g) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& w : g.objects)
    objects.push_back({{"allegiance", std::string(name_of(w.allegiance))},
                       {"kind", std::string(name_of(w.kind))},
                       {"probability", w.probability}});
  nlohmann::json allowed = nlohmann::json::array();
  for (std::size_t q = 0; q < kNumQuadrants; ++q)
    if (g.allowed_quadrants[q]) allowed.push_back(std::string(kQuadrantNames[q]));
  return {{"objects", objects},       {"occupied_probability", g.occupied_probability},
          {"allowed_quadrants", allowed}, {"hp_min", g.hp_min},
          {"hp_max", g.hp_max},       {"hp_step", g.hp_step},
          {"carry_hp", g.carry_hp}};
}

inline GeneratorConfig generator_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"objects", "occupied_probability", "allowed_quadrants", "hp_min", "hp_max",
                          "hp_step", "carry_hp"},
                         "generator");
  GeneratorConfig g;
  if (auto it = j.find("objects"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("generator.objects must be an array");
    g.objects.clear();
    for (const auto& o : *it) {
      detail::reject_unknown(o, {"allegiance", "kind", "probability"}, "generator.objects[]");
      try {
        g.objects.push_back({parse_allegiance(o.at("allegiance").get<std::string>()),
                             parse_kind(o.at("kind").get<std::string>()),
                             o.at("probability").get<double>()});
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("generator.objects[]: ") + e.what());
      } catch (const ParseError& e) {
        throw ConfigError(std::string("generator.objects[]: ") + e.what());
      }
    }
  }
  if (auto it = j.find("allowed_quadrants"); it != j.end()) {
    g.allowed_quadrants = {false, false, false, false};
    for (const auto& q : *it) {
      try {
        g.allowed_quadrants[index_of(parse_quadrant(q.get<std::string>()))] = true;
      } catch (const std::exception& e) {
        throw ConfigError(std::string("generator.allowed_quadrants: ") + e.what());
      }
    }
  }
  detail::read_field(j, "occupied_probability", g.occupied_probability);
  detail::read_field(j, "hp_min", g.hp_min);
  detail::read_field(j, "hp_max", g.hp_max);
  detail::read_field(j, "hp_step", g.hp_step);
  detail::read_field(j, "carry_hp", g.carry_hp);
  return g;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"gamma", c.gamma},
          {"learning_rate", c.learning_rate},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"episodes", c.episodes},
          {"seed", c.seed},
          {"max_steps_per_episode", c.max_steps_per_episode},
          {"architecture", to_json(c.architecture)},
          {"generator", to_json(c.generator)},
          {"rules", to_json(c.rules)}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"gamma", "learning_rate", "epsilon_start", "epsilon_end", "episodes",
                          "seed", "max_steps_per_episode", "architecture", "generator", "rules"},
                         "train config");
  TrainConfig c;
  detail::read_field(j, "gamma", c.gamma);
  detail::read_field(j, "learning_rate", c.learning_rate);
  detail::read_field(j, "epsilon_start", c.epsilon_start);
  detail::read_field(j, "epsilon_end", c.epsilon_end);
  detail::read_field(j, "episodes", c.episodes);
  detail::read_field(j, "seed", c.seed);
  detail::read_field(j, "max_steps_per_episode", c.max_steps_per_episode);
  if (auto it = j.find("architecture"); it != j.end()) c.architecture = architecture_from_json(*it);
  if (auto it = j.find("generator"); it != j.end()) c.generator = generator_from_json(*it);
  if (auto it = j.find("rules"); it != j.end()) c.rules = rules_from_json(*it);
  c.validate();
  return c;
}

}  // namespace xrl
