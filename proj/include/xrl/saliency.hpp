#pragma once

// Object-attribute perturbation saliency. Each applicable object is perturbed
// on its own; the output change for (reward type, action) is painted over
// the object's footprint.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrl/agent.hpp"
#include "xrl/error.hpp"
#include "xrl/game.hpp"
#include "xrl/io.hpp"
#include "xrl/rng.hpp"

namespace xrl {

enum class PerturbationKind : std::uint8_t { HP, Tank, Size, CityFort, FriendEnemy };

inline constexpr std::size_t kNumPerturbations = 5;
inline constexpr std::array<PerturbationKind, kNumPerturbations> kAllPerturbations = {
    PerturbationKind::HP, PerturbationKind::Tank, PerturbationKind::Size, PerturbationKind::CityFort,
    PerturbationKind::FriendEnemy};
inline constexpr std::array<std::string_view, kNumPerturbations> kPerturbationNames = {
    "HP", "Tank", "Size", "CityFort", "FriendEnemy"};

constexpr std::size_t index_of(PerturbationKind k) { return static_cast<std::size_t>(k); }
constexpr std::string_view name_of(PerturbationKind k) { return kPerturbationNames[index_of(k)]; }

inline PerturbationKind parse_perturbation(std::string_view s) {
  for (std::size_t i = 0; i < kNumPerturbations; ++i)
    if (kPerturbationNames[i] == s) return kAllPerturbations[i];
  throw ParseError("unknown perturbation kind '" + std::string(s) + "'");
}

constexpr bool applies(PerturbationKind p, ObjectKind k) {
  switch (p) {
    case PerturbationKind::HP:
    case PerturbationKind::FriendEnemy: return true;
    case PerturbationKind::Tank: return k == ObjectKind::Tank;
    case PerturbationKind::Size:
    case PerturbationKind::CityFort: return is_structure(k);
  }
  return false;
}

/// Small <-> Big within forts and within towns/cities.
constexpr ObjectKind size_partner(ObjectKind k) {
  switch (k) {
    case ObjectKind::SmallFort: return ObjectKind::BigFort;
    case ObjectKind::BigFort: return ObjectKind::SmallFort;
    case ObjectKind::Town: return ObjectKind::City;
    case ObjectKind::City: return ObjectKind::Town;
    case ObjectKind::Tank: break;
  }
  return k;
}

/// Fort <-> Town/City at equal size.
constexpr ObjectKind cityfort_partner(ObjectKind k) {
  switch (k) {
    case ObjectKind::SmallFort: return ObjectKind::Town;
    case ObjectKind::Town: return ObjectKind::SmallFort;
    case ObjectKind::BigFort: return ObjectKind::City;
    case ObjectKind::City: return ObjectKind::BigFort;
    case ObjectKind::Tank: break;
  }
  return k;
}

struct PerturbationOptions {
  /// HP perturbation multiplies hp by this factor (clamped to 100).
  double hp_factor = 0.7;
  /// Keep the sign of Q(s) - Q(s') instead of its magnitude (debugging only).
  bool signed_difference = false;
};

/// Perturbs the pixels of object `o` in `t`, an encoded state.
inline void perturb_tensor(StateTensor& t, const GameObject& o, PerturbationKind kind,
                           const PerturbationOptions& opt = {}) {
  if (!applies(kind, o.kind))
    throw PreconditionError(std::string(name_of(kind)) + " perturbation does not apply to " +
                            std::string(name_of(o.kind)) + " in " +
                            std::string(name_of(o.quadrant)));
  const Footprint f = footprint(o);
  auto move = [&](Layer from, Layer to) {
    for (int r = f.row; r < f.row + f.size; ++r)
      for (int c = f.col; c < f.col + f.size; ++c) {
        t.at(to, r, c) = t.at(from, r, c);
        t.at(from, r, c) = 0.0;
      }
  };
  switch (kind) {
    case PerturbationKind::HP:
      for (int r = f.row; r < f.row + f.size; ++r)
        for (int c = f.col; c < f.col + f.size; ++c)
          t.at(Layer::HP, r, c) = std::min(1.0, t.at(Layer::HP, r, c) * opt.hp_factor);
      break;
    case PerturbationKind::Tank: t.fill(Layer::EnemyTank, f, 0.0); break;
    case PerturbationKind::Size: move(kind_layer(o.kind), kind_layer(size_partner(o.kind))); break;
    case PerturbationKind::CityFort:
      move(kind_layer(o.kind), kind_layer(cityfort_partner(o.kind)));
      break;
    case PerturbationKind::FriendEnemy:
      for (int r = f.row; r < f.row + f.size; ++r)
        for (int c = f.col; c < f.col + f.size; ++c)
          t.at(Layer::FriendEnemy, r, c) = 1.0 - t.at(Layer::FriendEnemy, r, c);
      break;
  }
}

/// encode_state(s) with exactly the target's attribute transformed.
inline StateTensor perturb(const GameState& s, PerturbationKind kind, ObjectId target,
                           const PerturbationOptions& opt = {}) {
  const GameObject* o = s.find(target);
  if (!o) throw PreconditionError("perturb: no object with id " + std::to_string(target.value));
  StateTensor t = encode_state(s);
  perturb_tensor(t, *o, kind, opt);
  return t;
}

// ---------------------------------------------------------------------------
// Maps

struct SaliencyMap {
  PerturbationKind kind = PerturbationKind::HP;
  RewardType reward_type = RewardType::EnemyFortDamaged;
  Action action = Action::AttackQ1;
  std::vector<double> values = std::vector<double>(kPlaneSize, 0.0);

  double at(int r, int c) const { return values[static_cast<std::size_t>(r * kGrid + c)]; }
  double& at(int r, int c) { return values[static_cast<std::size_t>(r * kGrid + c)]; }
  double max() const { return *std::max_element(values.begin(), values.end()); }

  friend bool operator==(const SaliencyMap&, const SaliencyMap&) = default;
};

/// value[c][a] for one perturbed object.
using SensitivityGrid = std::array<std::array<double, kNumActions>, kNumRewardTypes>;

/// Per-object sensitivities for every (kind, reward type, action) of one state.
struct SaliencyStack {
  GameState state;
  std::array<std::array<bool, kNumQuadrants>, kNumPerturbations> applicable{};
  std::array<std::array<SensitivityGrid, kNumQuadrants>, kNumPerturbations> value{};

  double object_value(PerturbationKind k, Quadrant q, RewardType c, Action a) const {
    return value[index_of(k)][index_of(q)][index_of(c)][index_of(a)];
  }

  SaliencyMap map(PerturbationKind k, RewardType c, Action a) const {
    SaliencyMap m;
    m.kind = k;
    m.reward_type = c;
    m.action = a;
    for (std::size_t q = 0; q < kNumQuadrants; ++q) {
      if (!applicable[index_of(k)][q]) continue;
      const Footprint f = footprint(*state.quadrants[q]);
      const double v = value[index_of(k)][q][index_of(c)][index_of(a)];
      for (int r = f.row; r < f.row + f.size; ++r)
        for (int col = f.col; col < f.col + f.size; ++col) m.at(r, col) = v;
    }
    return m;
  }

  /// Largest painted value of a map (0 when nothing applies).
  double max(PerturbationKind k, RewardType c, Action a) const {
    double best = 0.0;
    for (std::size_t q = 0; q < kNumQuadrants; ++q)
      if (applicable[index_of(k)][q])
        best = std::max(best, value[index_of(k)][q][index_of(c)][index_of(a)]);
    return best;
  }
};

/// One forward pair per (kind, applicable object), all 6 nets each.
inline SaliencyStack saliency_stack(const DecomposedAgent& agent, const GameState& s,
                                    const PerturbationOptions& opt = {}) {
  SaliencyStack st;
  st.state = s;
  const StateTensor base = encode_state(s);
  const QMatrix q0 = agent.q_values(base);
  for (PerturbationKind k : kAllPerturbations) {
    for (std::size_t q = 0; q < kNumQuadrants; ++q) {
      const auto& o = s.quadrants[q];
      if (!o || !applies(k, o->kind)) continue;
      st.applicable[index_of(k)][q] = true;
      StateTensor t = base;
      perturb_tensor(t, *o, k, opt);
      const QMatrix q1 = agent.q_values(t);
      auto& grid = st.value[index_of(k)][q];
      for (std::size_t c = 0; c < kNumRewardTypes; ++c)
        for (std::size_t a = 0; a < kNumActions; ++a) {
          const double d = q0.q[c][a] - q1.q[c][a];
          grid[c][a] = opt.signed_difference ? d : std::abs(d);
        }
    }
  }
  return st;
}

inline SaliencyMap raw_saliency(const DecomposedAgent& agent, const GameState& s, RewardType c,
                                Action a, PerturbationKind kind,
                                const PerturbationOptions& opt = {}) {
  const StateTensor base = encode_state(s);
  const double q0 = agent.net(c).forward(base.values())[index_of(a)];
  SaliencyMap m;
  m.kind = kind;
  m.reward_type = c;
  m.action = a;
  for (const auto& o : s.quadrants) {
    if (!o || !applies(kind, o->kind)) continue;
    StateTensor t = base;
    perturb_tensor(t, *o, kind, opt);
    const double d = q0 - agent.net(c).forward(t.values())[index_of(a)];
    const double v = opt.signed_difference ? d : std::abs(d);
    const Footprint f = footprint(*o);
    for (int r = f.row; r < f.row + f.size; ++r)
      for (int col = f.col; col < f.col + f.size; ++col) m.at(r, col) = v;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Normalization

inline constexpr int kNormTableVersion = 1;

struct NormTable {
  std::array<std::array<std::array<double, kNumActions>, kNumRewardTypes>, kNumPerturbations>
      max_value{};
  std::int64_t episodes_sampled = 0;
  std::uint64_t seed = 0;

  double operator()(PerturbationKind k, RewardType c, Action a) const {
    return max_value[index_of(k)][index_of(c)][index_of(a)];
  }

  void observe(const SaliencyStack& st) {
    for (PerturbationKind k : kAllPerturbations)
      for (RewardType c : kAllRewardTypes)
        for (Action a : kAllActions) {
          double& cell = max_value[index_of(k)][index_of(c)][index_of(a)];
          cell = std::max(cell, st.max(k, c, a));
        }
  }

  friend bool operator==(const NormTable&, const NormTable&) = default;
};

/// Elementwise max; episode counts add up.
inline NormTable merge(const NormTable& a, const NormTable& b) {
  if (a.seed != b.seed) throw ValidationError("cannot merge norm tables built with different seeds");
  NormTable out = a;
  out.episodes_sampled = a.episodes_sampled + b.episodes_sampled;
  for (std::size_t k = 0; k < kNumPerturbations; ++k)
    for (std::size_t c = 0; c < kNumRewardTypes; ++c)
      for (std::size_t x = 0; x < kNumActions; ++x)
        out.max_value[k][c][x] = std::max(a.max_value[k][c][x], b.max_value[k][c][x]);
  return out;
}

struct NormTableConfig {
  std::uint64_t seed = 1;
  /// Episode range [first_episode, first_episode + episodes).
  std::int64_t first_episode = 0;
  std::int64_t episodes = 500;
  std::int64_t max_steps_per_episode = 100;
  GeneratorConfig generator;
  GameRules rules;
  PerturbationOptions perturbation;
};

inline std::uint64_t norm_episode_seed(std::uint64_t seed, std::int64_t episode) {
  return mix_seed(mix_seed(seed, 0x6e6f726d), static_cast<std::uint64_t>(episode));
}

/// Greedy episodes on generated maps; every visited state feeds the maxima.
/// Episode e always starts from the same map, so disjoint ranges merge
/// by elementwise max into the table of their union.
inline NormTable build_norm_table(const DecomposedAgent& agent, const NormTableConfig& cfg) {
  if (cfg.episodes < 1) throw ConfigError("norm table needs at least one episode");
  if (cfg.first_episode < 0) throw ConfigError("first_episode must be non-negative");
  if (cfg.max_steps_per_episode < 1) throw ConfigError("max_steps_per_episode must be >= 1");
  cfg.generator.validate();
  NormTable table;
  table.seed = cfg.seed;
  table.episodes_sampled = cfg.episodes;
  for (std::int64_t e = cfg.first_episode; e < cfg.first_episode + cfg.episodes; ++e) {
    GameState s = generate_map(norm_episode_seed(cfg.seed, e), cfg.generator);
    for (std::int64_t t = 0; t < cfg.max_steps_per_episode; ++t) {
      table.observe(saliency_stack(agent, s, cfg.perturbation));
      const StepOutcome out = step(s, greedy_action(total_q(agent.q_values(s)), legal_actions(s)),
                                   cfg.rules, cfg.generator);
      if (out.task_ended) break;
      s = out.next_state;
    }
  }
  return table;
}

/// min(v / max, 1), or 0 where the table cell is 0.
inline SaliencyMap normalize(const SaliencyMap& m, const NormTable& t) {
  const double mx = t(m.kind, m.reward_type, m.action);
  SaliencyMap out = m;
  for (double& v : out.values) {
    if (v < 0.0) throw PreconditionError("normalize expects a non-negative (absolute) map");
    v = mx > 0.0 ? std::min(v / mx, 1.0) : 0.0;
  }
  return out;
}

inline double normalize_value(double v, double mx) {
  if (v < 0.0) throw PreconditionError("normalize expects a non-negative value");
  return mx > 0.0 ? std::min(v / mx, 1.0) : 0.0;
}

inline nlohmann::json to_json(const NormTable& t) {
  nlohmann::json kinds = nlohmann::json::array();
  for (const auto& per_kind : t.max_value) {
    nlohmann::json types = nlohmann::json::array();
    for (const auto& per_type : per_kind) types.push_back(per_type);
    kinds.push_back(types);
  }
  return {{"version", kNormTableVersion},
          {"seed", t.seed},
          {"episodes", t.episodes_sampled},
          {"kinds", kPerturbationNames},
          {"reward_types", kRewardTypeNames},
          {"max", kinds}};
}

inline NormTable norm_table_from_json(const nlohmann::json& j) {
  NormTable t;
  try {
    if (j.at("version").get<int>() != kNormTableVersion)
      throw LoadError("unsupported norm table version " + j.at("version").dump());
    t.seed = j.at("seed").get<std::uint64_t>();
    t.episodes_sampled = j.at("episodes").get<std::int64_t>();
    const auto& mx = j.at("max");
    if (!mx.is_array() || mx.size() != kNumPerturbations)
      throw LoadError("norm table 'max' must be [5][6][4]");
    for (std::size_t k = 0; k < kNumPerturbations; ++k) {
      if (!mx[k].is_array() || mx[k].size() != kNumRewardTypes)
        throw LoadError("norm table 'max' must be [5][6][4]");
      for (std::size_t c = 0; c < kNumRewardTypes; ++c) {
        if (!mx[k][c].is_array() || mx[k][c].size() != kNumActions)
          throw LoadError("norm table 'max' must be [5][6][4]");
        for (std::size_t a = 0; a < kNumActions; ++a) {
          const double v = mx[k][c][a].get<double>();
          if (!(v >= 0.0) || !std::isfinite(v))
            throw LoadError("norm table entries must be finite and non-negative");
          t.max_value[k][c][a] = v;
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("norm table: ") + e.what());
  }
  return t;
}

inline void save_norm_table(const NormTable& t, const std::filesystem::path& path) {
  write_file_atomic(path, to_json(t).dump(2) + "\n");
}

inline NormTable load_norm_table(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  return norm_table_from_json(j);
}

// ---------------------------------------------------------------------------
// Colormap: black -> red -> yellow -> white.

struct HeatPixel {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const HeatPixel&, const HeatPixel&) = default;
};

inline HeatPixel heat(double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw PreconditionError("colorize expects values in [0, 1], got " + std::to_string(t));
  auto ch = [](double v) {
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
  };
  return {ch(3.0 * t), ch(3.0 * t - 1.0), ch(3.0 * t - 2.0)};
}

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  HeatPixel at(int r, int c) const {
    const std::size_t i = 3 * static_cast<std::size_t>(r * width + c);
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
};

inline RgbImage colorize(const SaliencyMap& m) {
  RgbImage img{kGrid, kGrid, std::vector<std::uint8_t>(3 * kPlaneSize)};
  for (std::size_t i = 0; i < kPlaneSize; ++i) {
    const HeatPixel p = heat(m.values[i]);
    img.pixels[3 * i] = p.r;
    img.pixels[3 * i + 1] = p.g;
    img.pixels[3 * i + 2] = p.b;
  }
  return img;
}

/// Rec. 601 luma.
inline double luminance(const HeatPixel& p) { return 0.299 * p.r + 0.587 * p.g + 0.114 * p.b; }

}  // namespace xrl
