#pragma once

// Tabular SARSA on enumerable mini-games: the decomposed learner and its
// scalar counterpart, used as an oracle for the decomposition identity.

#include <array>
#include <optional>
#include <string>
#include <unordered_map>

#include "xrl/game.hpp"

namespace xrl {

/// Exact, human-readable key of a game state's decision-relevant content.
inline std::string state_key(const GameState& s) {
  std::string key;
  for (std::size_t q = 0; q < kNumQuadrants; ++q) {
    key += kQuadrantNames[q];
    key += ':';
    if (const auto& o = s.quadrants[q]) {
      key += name_of(o->kind);
      key += '/';
      key += name_of(o->allegiance);
      key += '/';
      key += std::to_string(o->hp);
    } else {
      key += '-';
    }
    key += '|';
  }
  key += "agent:" + std::to_string(s.agent_hp);
  return key;
}

struct TabularTransition {
  std::string s;
  Action a = Action::AttackQ1;
  RewardVector r;
  std::string s_next;
  std::optional<Action> a_next;
  bool terminal = false;
};

using ComponentValues = std::array<double, kNumRewardTypes>;

class TabularDecomposedQ {
public:
  /// Entries default to zero.
  ComponentValues get(const std::string& s, Action a) const {
    auto it = table_.find(s);
    if (it == table_.end()) return {};
    return it->second[index_of(a)];
  }

  double total(const std::string& s, Action a) const {
    double sum = 0.0;
    for (double v : get(s, a)) sum += v;
    return sum;
  }

  void update(const TabularTransition& t, double lr, double gamma) {
    const ComponentValues next = t.terminal ? ComponentValues{} : get(t.s_next, *t.a_next);
    auto& cell = table_[t.s][index_of(t.a)];
    for (std::size_t c = 0; c < kNumRewardTypes; ++c) {
      const double target = t.r.values[c] + (t.terminal ? 0.0 : gamma * next[c]);
      cell[c] += lr * (target - cell[c]);
    }
  }

  const auto& table() const { return table_; }

private:
  std::unordered_map<std::string, std::array<ComponentValues, kNumActions>> table_;
};

class TabularScalarQ {
public:
  double get(const std::string& s, Action a) const {
    auto it = table_.find(s);
    return it == table_.end() ? 0.0 : it->second[index_of(a)];
  }

  void update(const TabularTransition& t, double lr, double gamma) {
    const double next = t.terminal ? 0.0 : get(t.s_next, *t.a_next);
    auto& cell = table_[t.s][index_of(t.a)];
    const double target = t.r.scalar() + (t.terminal ? 0.0 : gamma * next);
    cell += lr * (target - cell);
  }

  const auto& table() const { return table_; }

private:
  std::unordered_map<std::string, std::array<double, kNumActions>> table_;
};

}  // namespace xrl
