#pragma once

// Online decomposed SARSA over generated maps, plus evaluation helpers.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "xrl/agent.hpp"
#include "xrl/config.hpp"
#include "xrl/game.hpp"
#include "xrl/rng.hpp"

namespace xrl {

inline constexpr double kDivergenceLimit = 1e6;

struct EpisodeMetrics {
  std::int64_t episode = 0;
  double epsilon = 0.0;
  std::int64_t steps = 0;
  double total_return = 0.0;
  RewardVector component_return;
};

struct TrainResult {
  DecomposedAgent agent;
  std::vector<EpisodeMetrics> metrics;
};

/// Seed of the first map of `episode` for a run seeded with `seed`.
inline std::uint64_t episode_map_seed(std::uint64_t seed, std::int64_t episode) {
  return mix_seed(mix_seed(seed, 0x6d6170), static_cast<std::uint64_t>(episode));
}

namespace detail {

using NetPasses = std::array<ForwardPass, kNumRewardTypes>;

inline NetPasses evaluate_all(const DecomposedAgent& agent, const StateTensor& x) {
  NetPasses out;
  for (std::size_t c = 0; c < kNumRewardTypes; ++c) out[c] = agent.nets()[c].evaluate(x.values());
  return out;
}

inline ActionValues totals_of(const NetPasses& p) {
  QMatrix m;
  for (std::size_t c = 0; c < kNumRewardTypes; ++c) m.q[c] = p[c].out;
  return total_q(m);
}

inline void guard_divergence(const NetPasses& p, std::int64_t episode, double lr) {
  for (std::size_t c = 0; c < kNumRewardTypes; ++c)
    for (double v : p[c].out)
      if (!(std::abs(v) <= kDivergenceLimit))
        throw DivergenceError("value estimate " + std::to_string(v) + " for " +
                              std::string(kRewardTypeNames[c]) + " exceeded 1e6 in episode " +
                              std::to_string(episode) + " at learning_rate " + std::to_string(lr) +
                              "; reduce learning_rate (or architecture.value_scale/input_gain)");
}

}  // namespace detail

using ProgressFn = std::function<void(const EpisodeMetrics&, const DecomposedAgent&)>;

/// Runs cfg.episodes episodes. Each starts on a fresh map and loops
/// select -> step -> update until the agent dies (or max_steps_per_episode).
/// Deterministic in cfg.seed.
inline TrainResult train(const TrainConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  TrainResult result;
  result.agent = DecomposedAgent::initialized(cfg.architecture, mix_seed(cfg.seed, 0x696e6974));
  result.agent.train_config() = cfg;
  DecomposedAgent& agent = result.agent;
  Rng policy_rng(mix_seed(cfg.seed, 0x706f6c));

  for (std::int64_t e = 0; e < cfg.episodes; ++e) {
    EpisodeMetrics m;
    m.episode = e;
    m.epsilon = cfg.epsilon_at(e);

    GameState s = generate_map(episode_map_seed(cfg.seed, e), cfg.generator);
    StateTensor x = encode_state(s);
    detail::NetPasses current = detail::evaluate_all(agent, x);
    detail::guard_divergence(current, e, cfg.learning_rate);
    Action a = select_action(detail::totals_of(current), legal_actions(s), m.epsilon, policy_rng);

    for (std::int64_t t = 0; t < cfg.max_steps_per_episode; ++t) {
      const StepOutcome out = step(s, a, cfg.rules, cfg.generator);
      ++m.steps;
      m.total_return += out.reward.scalar();
      for (std::size_t c = 0; c < kNumRewardTypes; ++c)
        m.component_return.values[c] += out.reward.values[c];

      const bool terminal = out.task_ended || t + 1 == cfg.max_steps_per_episode;
      if (terminal) {
        apply_sarsa(agent, current, a, out.reward, std::nullopt, cfg.learning_rate, cfg.gamma);
        break;
      }

      const StateTensor x_next = encode_state(out.next_state);
      const detail::NetPasses next = detail::evaluate_all(agent, x_next);
      detail::guard_divergence(next, e, cfg.learning_rate);
      const Action a_next = select_action(detail::totals_of(next), legal_actions(out.next_state),
                                          m.epsilon, policy_rng);
      std::array<double, kNumRewardTypes> bootstrap{};
      for (std::size_t c = 0; c < kNumRewardTypes; ++c) bootstrap[c] = next[c].out[index_of(a_next)];
      apply_sarsa(agent, current, a, out.reward, bootstrap, cfg.learning_rate, cfg.gamma);

      s = out.next_state;
      x = x_next;
      // Parameters just changed, so the pass for s must be recomputed.
      current = detail::evaluate_all(agent, x);
      a = a_next;
    }
    if (progress) progress(m, agent);
    result.metrics.push_back(std::move(m));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

inline double immediate_reward(const GameState& s, Action a, const GameRules& rules) {
  return resolve_attack(s, a, rules).reward.scalar();
}

/// Best immediate scalar reward over legal actions (the 1-step exhaustive oracle).
inline double myopic_oracle_reward(const GameState& s, const GameRules& rules) {
  double best = -std::numeric_limits<double>::infinity();
  for (Action a : legal_actions(s)) best = std::max(best, immediate_reward(s, a, rules));
  return best;
}

inline Action greedy_action(const DecomposedAgent& agent, const GameState& s) {
  return greedy_action(total_q(agent.q_values(s)), legal_actions(s));
}

struct OracleComparison {
  double agent_return = 0.0;
  double oracle_return = 0.0;
  std::size_t maps = 0;
  std::size_t agreements = 0;

  double ratio() const { return oracle_return != 0.0 ? agent_return / oracle_return : 0.0; }
};

/// Immediate return of the greedy agent against the myopic oracle on
/// independent single-DP maps.
inline OracleComparison compare_with_myopic_oracle(const DecomposedAgent& agent,
                                                   const std::vector<GameState>& maps,
                                                   const GameRules& rules) {
  OracleComparison cmp;
  for (const auto& s : maps) {
    const Action a = greedy_action(agent, s);
    const double got = immediate_reward(s, a, rules);
    const double best = myopic_oracle_reward(s, rules);
    cmp.agent_return += got;
    cmp.oracle_return += best;
    cmp.agreements += got == best ? 1 : 0;
    ++cmp.maps;
  }
  return cmp;
}

/// Maps drawn from a seed stream disjoint from training's episode seeds.
inline std::vector<GameState> held_out_maps(const GeneratorConfig& gen, std::size_t n,
                                            std::uint64_t seed) {
  std::vector<GameState> maps;
  maps.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    maps.push_back(generate_map(mix_seed(mix_seed(seed, 0x686f6c64), i), gen));
  return maps;
}

}  // namespace xrl
