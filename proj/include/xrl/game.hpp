#pragma once

// Quadrant-attack game: object model, step/scoring rules, map generation and
// the 7-layer 40x40 tensor encoding consumed by the value networks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xrl/error.hpp"
#include "xrl/rng.hpp"

namespace xrl {

enum class ObjectKind : std::uint8_t { SmallFort, BigFort, Town, City, Tank };
enum class Allegiance : std::uint8_t { Friend, Enemy };
enum class Quadrant : std::uint8_t { Q1, Q2, Q3, Q4 };
enum class Action : std::uint8_t { AttackQ1, AttackQ2, AttackQ3, AttackQ4 };
enum class RewardType : std::uint8_t {
  EnemyFortDamaged,
  EnemyFortDestroyed,
  FriendlyFortDamaged,
  FriendlyFortDestroyed,
  TownCityDamaged,
  TownCityDestroyed,
};

inline constexpr std::size_t kNumKinds = 5;
inline constexpr std::size_t kNumQuadrants = 4;
inline constexpr std::size_t kNumActions = 4;
inline constexpr std::size_t kNumRewardTypes = 6;
inline constexpr double kMaxHp = 100.0;

inline constexpr std::array<ObjectKind, kNumKinds> kAllKinds = {
    ObjectKind::SmallFort, ObjectKind::BigFort, ObjectKind::Town, ObjectKind::City,
    ObjectKind::Tank};
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::AttackQ1, Action::AttackQ2, Action::AttackQ3, Action::AttackQ4};
inline constexpr std::array<RewardType, kNumRewardTypes> kAllRewardTypes = {
    RewardType::EnemyFortDamaged,      RewardType::EnemyFortDestroyed,
    RewardType::FriendlyFortDamaged,   RewardType::FriendlyFortDestroyed,
    RewardType::TownCityDamaged,       RewardType::TownCityDestroyed};

constexpr std::size_t index_of(ObjectKind k) { return static_cast<std::size_t>(k); }
constexpr std::size_t index_of(Quadrant q) { return static_cast<std::size_t>(q); }
constexpr std::size_t index_of(Action a) { return static_cast<std::size_t>(a); }
constexpr std::size_t index_of(RewardType c) { return static_cast<std::size_t>(c); }

constexpr Quadrant target_of(Action a) { return static_cast<Quadrant>(index_of(a)); }
constexpr Action attack(Quadrant q) { return static_cast<Action>(index_of(q)); }

// ---------------------------------------------------------------------------
// Names

namespace detail {
template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::array<std::string_view, N>& names,
                const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == text) return static_cast<Enum>(i);
  throw ParseError(std::string("unknown ") + what + " '" + std::string(text) + "'");
}
}  // namespace detail

inline constexpr std::array<std::string_view, kNumKinds> kKindNames = {
    "SmallFort", "BigFort", "Town", "City", "Tank"};
inline constexpr std::array<std::string_view, 2> kAllegianceNames = {"Friend", "Enemy"};
inline constexpr std::array<std::string_view, kNumQuadrants> kQuadrantNames = {"Q1", "Q2", "Q3",
                                                                                 "Q4"};
inline constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "AttackQ1", "AttackQ2", "AttackQ3", "AttackQ4"};
inline constexpr std::array<std::string_view, kNumRewardTypes> kRewardTypeNames = {
    "EnemyFortDamaged",    "EnemyFortDestroyed", "FriendlyFortDamaged",
    "FriendlyFortDestroyed", "TownCityDamaged",  "TownCityDestroyed"};

constexpr std::string_view name_of(ObjectKind k) { return kKindNames[index_of(k)]; }
constexpr std::string_view name_of(Allegiance a) {
  return kAllegianceNames[static_cast<std::size_t>(a)];
}
constexpr std::string_view name_of(Quadrant q) { return kQuadrantNames[index_of(q)]; }
constexpr std::string_view name_of(Action a) { return kActionNames[index_of(a)]; }
constexpr std::string_view name_of(RewardType c) { return kRewardTypeNames[index_of(c)]; }

inline ObjectKind parse_kind(std::string_view s) {
  return detail::parse_enum<ObjectKind>(s, kKindNames, "object kind");
}
inline Allegiance parse_allegiance(std::string_view s) {
  return detail::parse_enum<Allegiance>(s, kAllegianceNames, "allegiance");
}
inline Quadrant parse_quadrant(std::string_view s) {
  return detail::parse_enum<Quadrant>(s, kQuadrantNames, "quadrant");
}
/// Accepts both "AttackQ2" and the bare quadrant name "Q2".
inline Action parse_action(std::string_view s) {
  if (s.size() == 2 && s[0] == 'Q') return attack(parse_quadrant(s));
  return detail::parse_enum<Action>(s, kActionNames, "action");
}
inline RewardType parse_reward_type(std::string_view s) {
  return detail::parse_enum<RewardType>(s, kRewardTypeNames, "reward type");
}

constexpr bool is_structure(ObjectKind k) { return k != ObjectKind::Tank; }
constexpr bool is_fort(ObjectKind k) {
  return k == ObjectKind::SmallFort || k == ObjectKind::BigFort;
}
constexpr bool is_town_or_city(ObjectKind k) {
  return k == ObjectKind::Town || k == ObjectKind::City;
}
/// Only forts and tanks deal damage.
constexpr bool can_attack(ObjectKind k) { return is_fort(k) || k == ObjectKind::Tank; }
constexpr bool is_big(ObjectKind k) { return k == ObjectKind::BigFort || k == ObjectKind::City; }

// ---------------------------------------------------------------------------
// State

struct ObjectId {
  std::uint32_t value = 0;
  friend constexpr bool operator==(ObjectId, ObjectId) = default;
  friend constexpr auto operator<=>(ObjectId, ObjectId) = default;
};

/// The agent always carries this id; quadrant objects use ids >= 1.
inline constexpr ObjectId kAgentId{0};

struct GameObject {
  ObjectId id;
  ObjectKind kind = ObjectKind::SmallFort;
  Allegiance allegiance = Allegiance::Enemy;
  double hp = kMaxHp;
  Quadrant quadrant = Quadrant::Q1;

  friend bool operator==(const GameObject&, const GameObject&) = default;
};

struct GameState {
  std::array<std::optional<GameObject>, kNumQuadrants> quadrants;
  double agent_hp = kMaxHp;
  int task_index = 1;
  int dp_index = 1;
  double cumulative_score = 0.0;
  /// Seed of the map currently shown; the respawn map is derived from it.
  std::uint64_t map_seed = 0;
  std::uint32_t next_object_id = 1;

  const std::optional<GameObject>& at(Quadrant q) const { return quadrants[index_of(q)]; }
  std::optional<GameObject>& at(Quadrant q) { return quadrants[index_of(q)]; }

  const GameObject* find(ObjectId id) const {
    for (const auto& slot : quadrants)
      if (slot && slot->id == id) return &*slot;
    return nullptr;
  }

  std::vector<GameObject> objects() const {
    std::vector<GameObject> out;
    for (const auto& slot : quadrants)
      if (slot) out.push_back(*slot);
    return out;
  }

  std::size_t occupied_count() const {
    return static_cast<std::size_t>(
        std::count_if(quadrants.begin(), quadrants.end(), [](const auto& o) { return o.has_value(); }));
  }

  /// Places an object in its quadrant and assigns it a fresh id.
  GameObject& place(ObjectKind kind, Allegiance allegiance, double hp, Quadrant q) {
    auto& slot = at(q);
    slot = GameObject{ObjectId{next_object_id++}, kind, allegiance, hp, q};
    return *slot;
  }

  friend bool operator==(const GameState&, const GameState&) = default;
};

/// Throws ValidationError when `s` breaks a state invariant.
inline void validate_state(const GameState& s) {
  if (!(s.agent_hp > 0.0 && s.agent_hp <= kMaxHp))
    throw ValidationError("agent hp must lie in (0, 100]");
  if (s.occupied_count() == 0) throw ValidationError("state has no occupied quadrant");
  for (std::size_t q = 0; q < kNumQuadrants; ++q) {
    const auto& o = s.quadrants[q];
    if (!o) continue;
    if (o->quadrant != static_cast<Quadrant>(q))
      throw ValidationError("object stored under the wrong quadrant");
    if (o->id == kAgentId) throw ValidationError("quadrant object uses the agent id");
    if (!(o->hp > 0.0 && o->hp <= kMaxHp))
      throw ValidationError("object hp must lie in (0, 100] (quadrant " +
                            std::string(name_of(o->quadrant)) + ")");
    for (std::size_t p = q + 1; p < kNumQuadrants; ++p)
      if (s.quadrants[p] && s.quadrants[p]->id == o->id)
        throw ValidationError("duplicate object id");
  }
}

/// Actions whose quadrant holds an object, in quadrant order.
inline std::vector<Action> legal_actions(const GameState& s) {
  if (s.occupied_count() == 0) throw ValidationError("state has no occupied quadrant");
  std::vector<Action> out;
  for (std::size_t q = 0; q < kNumQuadrants; ++q)
    if (s.quadrants[q]) out.push_back(static_cast<Action>(q));
  return out;
}

inline bool is_legal(const GameState& s, Action a) { return s.at(target_of(a)).has_value(); }

// ---------------------------------------------------------------------------
// Rules

struct GameRules {
  double agent_attack = 50.0;
  double big_fort_attack = 20.0;
  double small_fort_attack = 10.0;
  double tank_attack = 15.0;
  /// Route damage to the agent into the FriendlyFort components.
  bool score_agent_as_friendly = false;

  double attack_of(ObjectKind k) const {
    switch (k) {
      case ObjectKind::BigFort: return big_fort_attack;
      case ObjectKind::SmallFort: return small_fort_attack;
      case ObjectKind::Tank: return tank_attack;
      default: return 0.0;
    }
  }
};

struct RewardVector {
  std::array<double, kNumRewardTypes> values{};

  double& operator[](RewardType c) { return values[index_of(c)]; }
  double operator[](RewardType c) const { return values[index_of(c)]; }

  /// Scalar reward, summed in reward-type order.
  double scalar() const {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum;
  }

  friend bool operator==(const RewardVector&, const RewardVector&) = default;
};

struct DamageEvent {
  ObjectId object_id;
  double damage_dealt = 0.0;
  bool destroyed = false;
  friend bool operator==(const DamageEvent&, const DamageEvent&) = default;
};

struct StepOutcome {
  GameState next_state;
  RewardVector reward;
  /// First event is the agent's attack; the rest are retaliation hits on the agent.
  std::vector<DamageEvent> events;
  bool target_destroyed = false;
  bool task_ended = false;
  friend bool operator==(const StepOutcome&, const StepOutcome&) = default;
};

/// Reward types a damage/destruction event on `o` is scored under. Tanks are
/// grouped with forts.
inline std::pair<RewardType, RewardType> reward_slots(const GameObject& o) {
  if (is_town_or_city(o.kind)) return {RewardType::TownCityDamaged, RewardType::TownCityDestroyed};
  if (o.allegiance == Allegiance::Enemy)
    return {RewardType::EnemyFortDamaged, RewardType::EnemyFortDestroyed};
  return {RewardType::FriendlyFortDamaged, RewardType::FriendlyFortDestroyed};
}

/// Applies the agent's attack and the retaliation to the current map without
/// respawning. The destroyed target is removed; `next_state` keeps the map.
inline StepOutcome resolve_attack(const GameState& s, Action a, const GameRules& rules) {
  const auto& slot = s.at(target_of(a));
  if (!slot)
    throw PreconditionError("illegal action " + std::string(name_of(a)) + ": quadrant is empty");

  StepOutcome out;
  out.next_state = s;
  GameState& next = out.next_state;
  const GameObject target = *slot;

  const double damage = std::min(target.hp, rules.agent_attack);
  const double remaining = std::clamp(target.hp - damage, 0.0, kMaxHp);
  const bool destroyed = remaining <= 0.0;
  out.events.push_back({target.id, damage, destroyed});
  out.target_destroyed = destroyed;

  const double sign = target.allegiance == Allegiance::Enemy ? 1.0 : -1.0;
  const auto [damaged_slot, destroyed_slot] = reward_slots(target);
  out.reward[damaged_slot] += sign * damage;
  if (destroyed) {
    out.reward[destroyed_slot] += sign * kMaxHp;
    next.at(target.quadrant).reset();
  } else {
    next.at(target.quadrant)->hp = remaining;
  }

  // Surviving enemy attackers hit back, in quadrant order.
  for (const auto& o : next.quadrants) {
    if (!o || o->allegiance != Allegiance::Enemy || !can_attack(o->kind)) continue;
    if (next.agent_hp <= 0.0) break;
    const double hit = std::min(next.agent_hp, rules.attack_of(o->kind));
    next.agent_hp = std::clamp(next.agent_hp - hit, 0.0, kMaxHp);
    const bool died = next.agent_hp <= 0.0;
    out.events.push_back({kAgentId, hit, died});
    if (rules.score_agent_as_friendly) {
      out.reward[RewardType::FriendlyFortDamaged] -= hit;
      if (died) out.reward[RewardType::FriendlyFortDestroyed] -= kMaxHp;
    }
  }

  next.cumulative_score = s.cumulative_score + out.reward.scalar();
  next.dp_index = s.dp_index + 1;
  out.task_ended = next.agent_hp <= 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Map generation

struct ObjectWeight {
  Allegiance allegiance;
  ObjectKind kind;
  double probability;
};

struct GeneratorConfig {
  /// Joint distribution over (allegiance, kind) of a quadrant object.
  std::vector<ObjectWeight> objects = {
      {Allegiance::Enemy, ObjectKind::SmallFort, 0.15}, {Allegiance::Enemy, ObjectKind::BigFort, 0.15},
      {Allegiance::Enemy, ObjectKind::Tank, 0.15},      {Allegiance::Enemy, ObjectKind::Town, 0.025},
      {Allegiance::Enemy, ObjectKind::City, 0.025},     {Allegiance::Friend, ObjectKind::SmallFort, 0.1},
      {Allegiance::Friend, ObjectKind::BigFort, 0.1},   {Allegiance::Friend, ObjectKind::Town, 0.15},
      {Allegiance::Friend, ObjectKind::City, 0.15}};
  /// Probability that an allowed quadrant is occupied (complement: empty).
  double occupied_probability = 0.8;
  std::array<bool, kNumQuadrants> allowed_quadrants = {true, true, true, true};
  /// Object hp is drawn uniformly from {hp_min, hp_min + hp_step, ..., <= hp_max}.
  double hp_min = 10.0;
  double hp_max = 100.0;
  double hp_step = 10.0;
  double carry_hp = kMaxHp;

  void validate() const {
    constexpr double tol = 1e-9;
    if (objects.empty()) throw ConfigError("generator: object distribution is empty");
    double sum = 0.0;
    for (const auto& w : objects) {
      if (!(w.probability >= 0.0 && w.probability <= 1.0))
        throw ConfigError("generator: object probability outside [0, 1]");
      sum += w.probability;
    }
    if (std::abs(sum - 1.0) > tol)
      throw ConfigError("generator: object probabilities sum to " + std::to_string(sum) +
                        ", expected 1");
    if (!(occupied_probability > 0.0 && occupied_probability <= 1.0))
      throw ConfigError("generator: occupied_probability must lie in (0, 1]");
    if (std::none_of(allowed_quadrants.begin(), allowed_quadrants.end(), [](bool b) { return b; }))
      throw ConfigError("generator: no quadrant allowed");
    if (!(hp_min > 0.0 && hp_max <= kMaxHp && hp_min <= hp_max && hp_step > 0.0))
      throw ConfigError("generator: hp grid must satisfy 0 < hp_min <= hp_max <= 100, step > 0");
    if (!(carry_hp > 0.0 && carry_hp <= kMaxHp))
      throw ConfigError("generator: carry_hp must lie in (0, 100]");
    if (enemy_mass() <= 0.0) throw ConfigError("generator: distribution has no enemy objects");
  }

  double enemy_mass() const {
    double m = 0.0;
    for (const auto& w : objects)
      if (w.allegiance == Allegiance::Enemy) m += w.probability;
    return m;
  }

  std::size_t hp_levels() const {
    return static_cast<std::size_t>(std::floor((hp_max - hp_min) / hp_step + 1e-9)) + 1;
  }
};

/// One categorical draw from the object distribution.
inline const ObjectWeight& sample_object(Rng& rng, const GeneratorConfig& cfg) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (const auto& w : cfg.objects) {
    acc += w.probability;
    if (u < acc) return w;
  }
  // Rounding slack: fall back to the last entry with mass.
  for (auto it = cfg.objects.rbegin(); it != cfg.objects.rend(); ++it)
    if (it->probability > 0.0) return *it;
  return cfg.objects.back();
}

/// Deterministic map for (seed, cfg): 1-4 occupied quadrants, at least one
/// enemy, agent at cfg.carry_hp.
inline GameState generate_map(std::uint64_t seed, const GeneratorConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(seed));
  const std::size_t levels = cfg.hp_levels();
  for (int attempt = 0; attempt < 10000; ++attempt) {
    GameState s;
    s.agent_hp = cfg.carry_hp;
    s.map_seed = seed;
    bool any_enemy = false;
    for (std::size_t q = 0; q < kNumQuadrants; ++q) {
      if (!cfg.allowed_quadrants[q]) continue;
      if (rng.uniform() >= cfg.occupied_probability) continue;
      const auto& w = sample_object(rng, cfg);
      const double hp = cfg.hp_min + cfg.hp_step * static_cast<double>(rng.index(levels));
      s.place(w.kind, w.allegiance, hp, static_cast<Quadrant>(q));
      any_enemy = any_enemy || w.allegiance == Allegiance::Enemy;
    }
    if (s.occupied_count() > 0 && any_enemy) return s;
  }
  throw ConfigError("generator: could not draw a map with an enemy object");
}

/// Full step: resolve the attack and, when the target was destroyed and the
/// agent survived, respawn on a fresh map carrying over agent hp, score and
/// indices.
inline StepOutcome step(const GameState& s, Action a, const GameRules& rules,
                        const GeneratorConfig& respawn) {
  StepOutcome out = resolve_attack(s, a, rules);
  if (out.target_destroyed && !out.task_ended) {
    GeneratorConfig cfg = respawn;
    cfg.carry_hp = out.next_state.agent_hp;
    GameState fresh = generate_map(mix_seed(s.map_seed, 0x5eed), cfg);
    fresh.task_index = out.next_state.task_index;
    fresh.dp_index = out.next_state.dp_index;
    fresh.cumulative_score = out.next_state.cumulative_score;
    out.next_state = std::move(fresh);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tensor encoding

enum class Layer : std::uint8_t { HP, EnemyTank, SmallForts, BigForts, Towns, Cities, FriendEnemy };

inline constexpr std::size_t kNumLayers = 7;
inline constexpr int kGrid = 40;
inline constexpr int kBlock = 20;
inline constexpr std::size_t kPlaneSize = static_cast<std::size_t>(kGrid * kGrid);
inline constexpr std::size_t kTensorSize = kNumLayers * kPlaneSize;

constexpr std::size_t index_of(Layer l) { return static_cast<std::size_t>(l); }

constexpr Layer kind_layer(ObjectKind k) {
  switch (k) {
    case ObjectKind::SmallFort: return Layer::SmallForts;
    case ObjectKind::BigFort: return Layer::BigForts;
    case ObjectKind::Town: return Layer::Towns;
    case ObjectKind::City: return Layer::Cities;
    case ObjectKind::Tank: return Layer::EnemyTank;
  }
  return Layer::EnemyTank;
}

/// Square pixel block [row, row+size) x [col, col+size).
struct Footprint {
  int row = 0;
  int col = 0;
  int size = 0;

  bool contains(int r, int c) const {
    return r >= row && r < row + size && c >= col && c < col + size;
  }
  friend bool operator==(const Footprint&, const Footprint&) = default;
};

/// Top-left corner of a quadrant block. Q1 top-right, Q2 top-left,
/// Q3 bottom-left, Q4 bottom-right.
constexpr std::pair<int, int> block_origin(Quadrant q) {
  switch (q) {
    case Quadrant::Q1: return {0, kBlock};
    case Quadrant::Q2: return {0, 0};
    case Quadrant::Q3: return {kBlock, 0};
    case Quadrant::Q4: return {kBlock, kBlock};
  }
  return {0, 0};
}

/// All object kinds share one centered 8x8 footprint; size lives in the kind layers.
inline constexpr int kObjectFootprint = 8;

constexpr int footprint_size(ObjectKind) { return kObjectFootprint; }

constexpr Footprint footprint(Quadrant q, ObjectKind k) {
  const auto [r0, c0] = block_origin(q);
  const int size = footprint_size(k);
  const int off = (kBlock - size) / 2;
  return {r0 + off, c0 + off, size};
}

inline Footprint footprint(const GameObject& o) { return footprint(o.quadrant, o.kind); }

constexpr Footprint agent_footprint() { return {kGrid / 2 - 2, kGrid / 2 - 2, 4}; }

/// 7 x 40 x 40 row-major planes. Layer order follows `Layer`.
class StateTensor {
public:
  StateTensor() : data_(kTensorSize, 0.0) {}

  double& at(Layer l, int r, int c) { return data_[offset(l, r, c)]; }
  double at(Layer l, int r, int c) const { return data_[offset(l, r, c)]; }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  std::span<const double> plane(Layer l) const {
    return std::span<const double>(data_).subspan(index_of(l) * kPlaneSize, kPlaneSize);
  }

  void fill(Layer l, const Footprint& f, double v) {
    for (int r = f.row; r < f.row + f.size; ++r)
      for (int c = f.col; c < f.col + f.size; ++c) at(l, r, c) = v;
  }

  friend bool operator==(const StateTensor&, const StateTensor&) = default;

private:
  static std::size_t offset(Layer l, int r, int c) {
    return index_of(l) * kPlaneSize + static_cast<std::size_t>(r * kGrid + c);
  }
  std::vector<double> data_;
};

/// Paints every object's footprint: hp/100 in HP, 1 in its kind layer, and
/// Friend=1 / Enemy=0 in FriendEnemy. The agent occupies the center block
/// (HP and FriendEnemy only).
inline StateTensor encode_state(const GameState& s) {
  StateTensor t;
  const Footprint af = agent_footprint();
  t.fill(Layer::HP, af, s.agent_hp / kMaxHp);
  t.fill(Layer::FriendEnemy, af, 1.0);
  for (const auto& o : s.quadrants) {
    if (!o) continue;
    const Footprint f = footprint(*o);
    t.fill(Layer::HP, f, o->hp / kMaxHp);
    t.fill(kind_layer(o->kind), f, 1.0);
    if (o->allegiance == Allegiance::Friend) t.fill(Layer::FriendEnemy, f, 1.0);
  }
  return t;
}

/// Decoded view of a tensor: object kinds, allegiances and hp (to 1/100).
struct DecodedState {
  std::array<std::optional<GameObject>, kNumQuadrants> quadrants;
  double agent_hp = 0.0;
};

inline double round_hp(double v) { return std::round(v * kMaxHp * 100.0) / 100.0; }

inline DecodedState decode_state(const StateTensor& t) {
  DecodedState d;
  const Footprint af = agent_footprint();
  d.agent_hp = round_hp(t.at(Layer::HP, af.row, af.col));
  for (std::size_t q = 0; q < kNumQuadrants; ++q) {
    const auto quadrant = static_cast<Quadrant>(q);
    const auto [r0, c0] = block_origin(quadrant);
    // Every footprint covers the block's central 4x4.
    const int r = r0 + kBlock / 2 - 1;
    const int c = c0 + kBlock / 2 - 1;
    for (ObjectKind k : kAllKinds) {
      if (t.at(kind_layer(k), r, c) < 0.5) continue;
      GameObject o;
      o.kind = k;
      o.quadrant = quadrant;
      o.hp = round_hp(t.at(Layer::HP, r, c));
      o.allegiance = t.at(Layer::FriendEnemy, r, c) >= 0.5 ? Allegiance::Friend : Allegiance::Enemy;
      d.quadrants[q] = o;
      break;
    }
  }
  return d;
}

}  // namespace xrl
