#pragma once

// Treatment-gated prediction sessions over a scripted scenario.
//
// A session walks the scenario's DPs in order. Each DP opens in Predict
// (map, score and the question only); a prediction or the deadline moves it
// to Reveal, which adds the agent's move and the treatment's explanations.
// Every mutation is an event; the JSONL event log rebuilds the session.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrl/agent.hpp"
#include "xrl/error.hpp"
#include "xrl/game.hpp"
#include "xrl/png.hpp"
#include "xrl/saliency.hpp"
#include "xrl/scenario.hpp"

namespace xrl {

enum class Treatment : std::uint8_t { Control, Saliency, Rewards, Everything };

inline constexpr std::size_t kNumTreatments = 4;
inline constexpr std::array<Treatment, kNumTreatments> kAllTreatments = {
    Treatment::Control, Treatment::Saliency, Treatment::Rewards, Treatment::Everything};
inline constexpr std::array<std::string_view, kNumTreatments> kTreatmentNames = {
    "Control", "Saliency", "Rewards", "Everything"};

constexpr std::size_t index_of(Treatment t) { return static_cast<std::size_t>(t); }
constexpr std::string_view name_of(Treatment t) { return kTreatmentNames[index_of(t)]; }

inline Treatment parse_treatment(std::string_view s) {
  for (std::size_t i = 0; i < kNumTreatments; ++i)
    if (kTreatmentNames[i] == s) return kAllTreatments[i];
  throw ValidationError("unknown treatment '" + std::string(s) +
                        "' (expected Control, Saliency, Rewards or Everything)");
}

constexpr bool shows_saliency(Treatment t) {
  return t == Treatment::Saliency || t == Treatment::Everything;
}
constexpr bool shows_rewards(Treatment t) {
  return t == Treatment::Rewards || t == Treatment::Everything;
}

enum class Phase : std::uint8_t { Predict, Reveal };

constexpr std::string_view name_of(Phase p) { return p == Phase::Predict ? "Predict" : "Reveal"; }

/// Milliseconds on some monotone timeline.
using Clock = std::function<std::int64_t()>;

inline Clock system_clock_ms() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

inline Clock fixed_clock(std::int64_t t = 0) {
  return [t] { return t; };
}

inline constexpr std::string_view kFinalPromptToken = "final_free_response";
inline constexpr std::string_view kPredictQuestion =
    "Which quadrant will the agent attack next, and why?";

struct SessionConfig {
  std::int64_t first_deadline_ms = 720'000;
  std::int64_t deadline_ms = 480'000;
  /// Sessions stop accepting requests this long after creation.
  std::int64_t expires_after_ms = 4 * 3'600'000;
  GameRules rules;
  PerturbationOptions perturbation;

  std::vector<std::int64_t> deadlines(std::size_t n) const {
    std::vector<std::int64_t> out(n, deadline_ms);
    if (n > 0) out[0] = first_deadline_ms;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Frozen scenario walk

struct FrozenDp {
  int number = 0;  // 1-based, global
  int task = 0;    // 1-based
  int dp_in_task = 0;
  GameState shown;
  Action agent_action = Action::AttackQ1;
  StepOutcome outcome;
};

/// Shown states and greedy (epsilon = 0) actions for every DP. A DP without
/// agent_hp continues with the hp left after the previous DP of its task
/// (100 at a task start); the score accumulates over the whole session.
inline std::vector<FrozenDp> freeze_scenario(const Scenario& sc, const DecomposedAgent& agent,
                                             const GameRules& rules) {
  validate_scenario(sc);
  std::vector<FrozenDp> out;
  double score = 0.0;
  int number = 0;
  for (std::size_t t = 0; t < sc.tasks.size(); ++t) {
    double hp = kMaxHp;
    for (std::size_t d = 0; d < sc.tasks[t].size(); ++d) {
      const auto& spec = sc.tasks[t][d];
      ++number;
      if (spec.agent_hp) hp = *spec.agent_hp;
      if (!(hp > 0.0))
        throw ValidationError("DP" + std::to_string(number) +
                              ": carried agent hp is exhausted; set agent_hp explicitly");
      FrozenDp f;
      f.number = number;
      f.task = static_cast<int>(t + 1);
      f.dp_in_task = static_cast<int>(d + 1);
      f.shown = make_state(spec, hp, f.task, f.dp_in_task, score);
      f.agent_action = greedy_action(total_q(agent.q_values(f.shown)), legal_actions(f.shown));
      f.outcome = resolve_attack(f.shown, f.agent_action, rules);
      score = f.outcome.next_state.cumulative_score;
      hp = f.outcome.next_state.agent_hp;
      out.push_back(std::move(f));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Payload pieces

inline nlohmann::json map_json(const GameState& s) {
  nlohmann::json quads = nlohmann::json::object();
  for (std::size_t q = 0; q < kNumQuadrants; ++q) {
    const auto& o = s.quadrants[q];
    quads[std::string(kQuadrantNames[q])] =
        o ? nlohmann::json{{"kind", std::string(name_of(o->kind))},
                           {"allegiance", std::string(name_of(o->allegiance))},
                           {"hp", o->hp}}
          : nlohmann::json(nullptr);
  }
  return {{"quadrants", quads}, {"agent_hp", s.agent_hp}};
}

inline nlohmann::json events_json(const FrozenDp& f) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : f.outcome.events) {
    std::string target = "agent";
    if (e.object_id != kAgentId)
      if (const GameObject* o = f.shown.find(e.object_id)) target = std::string(name_of(o->quadrant));
    out.push_back({{"target", target}, {"damage_dealt", e.damage_dealt}, {"destroyed", e.destroyed}});
  }
  return out;
}

/// Six labeled component bars plus the total, per legal action.
inline nlohmann::json reward_bars_json(const QMatrix& m, const std::vector<Action>& legal) {
  const ActionValues totals = total_q(m);
  nlohmann::json out = nlohmann::json::array();
  for (Action a : legal) {
    nlohmann::json bars = nlohmann::json::array();
    for (RewardType c : kAllRewardTypes)
      bars.push_back({{"reward_type", std::string(name_of(c))}, {"value", m(c, a)}});
    out.push_back({{"action", std::string(name_of(a))}, {"bars", bars}, {"total", totals[index_of(a)]}});
  }
  return out;
}

/// One row per (action, reward bar): normalized object values and a heat PNG
/// for each perturbation kind.
inline nlohmann::json saliency_json(const SaliencyStack& st, const NormTable& table,
                                    const std::vector<Action>& actions) {
  nlohmann::json rows = nlohmann::json::array();
  for (Action a : actions) {
    for (RewardType c : kAllRewardTypes) {
      nlohmann::json maps = nlohmann::json::array();
      for (PerturbationKind k : kAllPerturbations) {
        const double mx = table(k, c, a);
        nlohmann::json objects = nlohmann::json::array();
        for (std::size_t q = 0; q < kNumQuadrants; ++q) {
          if (!st.applicable[index_of(k)][q]) continue;
          const double raw = st.value[index_of(k)][q][index_of(c)][index_of(a)];
          objects.push_back({{"quadrant", std::string(kQuadrantNames[q])},
                             {"raw", raw},
                             {"value", normalize_value(raw, mx)}});
        }
        maps.push_back({{"kind", std::string(name_of(k))},
                        {"objects", objects},
                        {"png", png_data_uri(colorize(normalize(st.map(k, c, a), table)))}});
      }
      rows.push_back(
          {{"action", std::string(name_of(a))}, {"reward_type", std::string(name_of(c))}, {"maps", maps}});
    }
  }
  return rows;
}

/// Reveal-phase explanation fields for `treatment`. Always: agent_action,
/// score_delta, events. Rewards adds reward_bars; Saliency adds saliency for
/// the taken action; Everything adds both, saliency for every legal action.
inline nlohmann::json explanation_payload(Treatment treatment, const FrozenDp& f,
                                          const DecomposedAgent& agent, const NormTable* table,
                                          const PerturbationOptions& opt = {}) {
  nlohmann::json p = {{"agent_action", std::string(name_of(f.agent_action))},
                      {"score_delta", f.outcome.reward.scalar()},
                      {"events", events_json(f)}};
  const std::vector<Action> legal = legal_actions(f.shown);
  if (shows_rewards(treatment)) p["reward_bars"] = reward_bars_json(agent.q_values(f.shown), legal);
  if (shows_saliency(treatment)) {
    if (!table) throw PreconditionError("the " + std::string(name_of(treatment)) +
                                        " treatment needs a norm table");
    const SaliencyStack st = saliency_stack(agent, f.shown, opt);
    const std::vector<Action> rows =
        treatment == Treatment::Saliency ? std::vector<Action>{f.agent_action} : legal;
    p["saliency"] = saliency_json(st, *table, rows);
  }
  return p;
}

/// Every key path of a JSON document; array elements collapse to "[]".
inline std::set<std::string> key_paths(const nlohmann::json& j, const std::string& prefix = "") {
  std::set<std::string> out;
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      const std::string path = prefix.empty() ? k : prefix + "." + k;
      out.insert(path);
      for (auto& p : key_paths(v, path)) out.insert(std::move(p));
    }
  } else if (j.is_array()) {
    for (const auto& v : j)
      for (auto& p : key_paths(v, prefix + "[]")) out.insert(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Session

struct DecisionPointRecord {
  int dp = 0;
  Action agent_action = Action::AttackQ1;
  std::optional<Action> predicted;
  std::string rationale;
  bool correct = false;
  std::int64_t elapsed_ms = 0;
  std::optional<std::int64_t> client_elapsed_ms;
  bool timed_out = false;

  friend bool operator==(const DecisionPointRecord&, const DecisionPointRecord&) = default;
};

inline nlohmann::json to_json(const DecisionPointRecord& r) {
  return {{"dp", r.dp},
          {"agent_action", std::string(name_of(r.agent_action))},
          {"predicted", r.predicted ? nlohmann::json(std::string(name_of(*r.predicted))) : nullptr},
          {"rationale", r.rationale},
          {"correct", r.correct},
          {"elapsed_ms", r.elapsed_ms},
          {"client_elapsed_ms", r.client_elapsed_ms ? nlohmann::json(*r.client_elapsed_ms) : nullptr},
          {"timed_out", r.timed_out}};
}

inline DecisionPointRecord record_from_json(const nlohmann::json& j) {
  DecisionPointRecord r;
  r.dp = j.at("dp").get<int>();
  r.agent_action = parse_action(j.at("agent_action").get<std::string>());
  if (!j.at("predicted").is_null()) r.predicted = parse_action(j.at("predicted").get<std::string>());
  r.rationale = j.at("rationale").get<std::string>();
  r.correct = j.at("correct").get<bool>();
  r.elapsed_ms = j.at("elapsed_ms").get<std::int64_t>();
  if (!j.at("client_elapsed_ms").is_null())
    r.client_elapsed_ms = j.at("client_elapsed_ms").get<std::int64_t>();
  r.timed_out = j.at("timed_out").get<bool>();
  return r;
}

/// Immutable inputs a session runs against.
struct StudyMaterials {
  std::shared_ptr<const Scenario> scenario;
  std::string scenario_name;
  std::shared_ptr<const DecomposedAgent> agent;
  std::string checkpoint_fingerprint;
  /// Needed by the Saliency and Everything treatments only.
  std::shared_ptr<const NormTable> norm_table;
};

/// Fingerprint of a serialized checkpoint (FNV-1a, hex).
inline std::string checkpoint_fingerprint(const DecomposedAgent& agent) {
  const std::string bytes = serialize_checkpoint(agent);
  std::uint64_t h = detail::fnv1a(bytes.data(), bytes.size());
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
  return out;
}

class Session {
public:
  using Listener = std::function<void(const nlohmann::json&)>;

  /// New session at DP1 / Predict. Emits session_created and dp_shown.
  static Session create(std::string id, Treatment treatment, StudyMaterials materials,
                        SessionConfig config, Clock clock, Listener listener = {}) {
    Session s(std::move(id), treatment, std::move(materials), std::move(config), std::move(clock));
    s.listener_ = std::move(listener);
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& f : s.frozen_) actions.push_back(std::string(name_of(f.agent_action)));
    s.emit("session_created", std::nullopt,
           {{"scenario", s.materials_.scenario_name},
            {"scenario_fingerprint", scenario_fingerprint(*s.materials_.scenario)},
            {"checkpoint_fingerprint", s.materials_.checkpoint_fingerprint},
            {"dp_count", s.frozen_.size()},
            {"deadlines_ms", s.deadlines_},
            {"agent_actions", actions}});
    s.emit_shown(0);
    return s;
  }

  /// Rebuilds a session from its event log. The materials must be the ones
  /// the log was recorded against (fingerprints and frozen actions are checked).
  static Session replay(const std::vector<nlohmann::json>& events, StudyMaterials materials,
                        SessionConfig config, Clock clock) {
    if (events.empty() || events.front().value("type", "") != "session_created")
      throw ValidationError("log must start with a session_created event");
    const auto& first = events.front();
    Session s(first.at("session").get<std::string>(),
              parse_treatment(first.at("treatment").get<std::string>()), std::move(materials),
              std::move(config), std::move(clock));
    for (const auto& e : events) s.apply(e);
    return s;
  }

  void set_listener(Listener l) { listener_ = std::move(l); }

  const std::string& id() const { return id_; }
  Treatment treatment() const { return treatment_; }
  const std::vector<FrozenDp>& frozen() const { return frozen_; }
  const std::vector<DecisionPointRecord>& records() const { return records_; }
  const std::vector<nlohmann::json>& events() const { return events_; }
  std::size_t cursor() const { return cursor_; }
  Phase phase() const { return phase_; }
  bool complete() const { return complete_; }

  std::string log_jsonl() const {
    std::string out;
    for (const auto& e : events_) out += e.dump() + "\n";
    return out;
  }

  bool expired() const { return clock_() - created_ts_ > config_.expires_after_ms; }

  std::int64_t remaining_ms() const {
    if (complete_ || phase_ != Phase::Predict) return 0;
    return std::max<std::int64_t>(0, shown_ts_ + deadlines_[cursor_] - clock_());
  }

  /// Applies a passed deadline. Returns true when the phase changed.
  bool poll() {
    if (complete_ || phase_ != Phase::Predict) return false;
    const std::int64_t now = clock_();
    if (now - shown_ts_ < deadlines_[cursor_]) return false;
    DecisionPointRecord r;
    r.dp = frozen_[cursor_].number;
    r.agent_action = frozen_[cursor_].agent_action;
    r.elapsed_ms = deadlines_[cursor_];
    r.timed_out = true;
    emit("prediction", Phase::Predict, to_json(r));
    return true;
  }

  nlohmann::json view() {
    guard_expiry();
    poll();
    nlohmann::json v = {{"session", id_}, {"treatment", std::string(name_of(treatment_))}};
    if (complete_) {
      v["phase"] = "Complete";
      v["complete"] = true;
      v["prompt"] = std::string(kFinalPromptToken);
      return v;
    }
    const FrozenDp& f = frozen_[cursor_];
    v["phase"] = std::string(name_of(phase_));
    v["cursor"] = cursor_json();
    v["map"] = map_json(f.shown);
    v["score"] = f.shown.cumulative_score;
    v["deadline_ms"] = deadlines_[cursor_];
    if (phase_ == Phase::Predict) {
      nlohmann::json choices = nlohmann::json::array();
      for (Action a : legal_actions(f.shown)) choices.push_back(std::string(name_of(target_of(a))));
      v["prompt"] = {{"question", std::string(kPredictQuestion)}, {"choices", choices}};
      v["remaining_ms"] = remaining_ms();
    } else {
      v["result"] = result_json(records_.back());
      for (auto& [k, val] : reveal_payload().items()) v[k] = val;
    }
    return v;
  }

  /// Records the prediction for the current DP and reveals it. A submission
  /// that arrives after the deadline is recorded as a timeout.
  nlohmann::json submit(std::string_view quadrant, std::string rationale,
                        std::optional<std::int64_t> client_elapsed_ms = std::nullopt) {
    guard_expiry();
    if (complete_) throw ConflictError("session is complete");
    if (phase_ != Phase::Predict)
      throw ConflictError("a prediction is already recorded for DP" +
                          std::to_string(frozen_[cursor_].number));
    const FrozenDp& f = frozen_[cursor_];
    Action predicted;
    try {
      predicted = parse_action(quadrant);
    } catch (const ParseError& e) {
      throw ValidationError(e.what());
    }
    if (!is_legal(f.shown, predicted))
      throw ValidationError("quadrant " + std::string(name_of(target_of(predicted))) +
                            " is empty at DP" + std::to_string(f.number));
    if (!poll()) {
      DecisionPointRecord r;
      r.dp = f.number;
      r.agent_action = f.agent_action;
      r.predicted = predicted;
      r.rationale = std::move(rationale);
      r.correct = predicted == f.agent_action;
      r.elapsed_ms = clock_() - shown_ts_;
      r.client_elapsed_ms = client_elapsed_ms;
      emit("prediction", Phase::Predict, to_json(r));
    }
    nlohmann::json out = result_json(records_.back());
    for (auto& [k, val] : reveal_payload().items()) out[k] = val;
    return out;
  }

  /// Next DP, or SessionComplete after the last one.
  nlohmann::json advance() {
    guard_expiry();
    if (complete_) throw ConflictError("session is complete");
    if (phase_ != Phase::Reveal) throw ConflictError("cannot advance before the DP is revealed");
    if (cursor_ + 1 == frozen_.size()) {
      emit("session_complete", Phase::Reveal, {{"prompt", std::string(kFinalPromptToken)}});
      return {{"complete", true}, {"prompt", std::string(kFinalPromptToken)}};
    }
    emit("advance", Phase::Reveal, {{"to", frozen_[cursor_ + 1].number}});
    emit_shown(cursor_ + 1);
    return {{"complete", false}, {"cursor", cursor_json()}};
  }

  /// Countdown / phase message for event streams.
  nlohmann::json status() const {
    if (complete_) return {{"type", "complete"}, {"session", id_}};
    return {{"type", "tick"},
            {"session", id_},
            {"dp", frozen_[cursor_].number},
            {"phase", std::string(name_of(phase_))},
            {"remaining_ms", remaining_ms()}};
  }

private:
  Session(std::string id, Treatment treatment, StudyMaterials materials, SessionConfig config,
          Clock clock)
      : id_(std::move(id)),
        treatment_(treatment),
        materials_(std::move(materials)),
        config_(std::move(config)),
        clock_(std::move(clock)) {
    if (!materials_.scenario || !materials_.agent)
      throw PreconditionError("session needs a scenario and an agent");
    if (shows_saliency(treatment_) && !materials_.norm_table)
      throw NotFoundError("the " + std::string(name_of(treatment_)) + " treatment needs a norm table");
    frozen_ = freeze_scenario(*materials_.scenario, *materials_.agent, config_.rules);
    deadlines_ = config_.deadlines(frozen_.size());
    reveal_cache_.resize(frozen_.size());
  }

  void guard_expiry() const {
    if (expired()) throw GoneError("session " + id_ + " has expired");
  }

  nlohmann::json cursor_json() const {
    const FrozenDp& f = frozen_[cursor_];
    return {{"task", f.task}, {"dp", f.dp_in_task}, {"number", f.number}, {"of", frozen_.size()}};
  }

  static nlohmann::json result_json(const DecisionPointRecord& r) {
    return {{"predicted", r.predicted ? nlohmann::json(std::string(name_of(*r.predicted))) : nullptr},
            {"correct", r.correct},
            {"timed_out", r.timed_out},
            {"elapsed_ms", r.elapsed_ms}};
  }

  const nlohmann::json& reveal_payload() {
    auto& slot = reveal_cache_[cursor_];
    if (!slot)
      slot = explanation_payload(treatment_, frozen_[cursor_], *materials_.agent,
                                 materials_.norm_table.get(), config_.perturbation);
    return *slot;
  }

  void emit_shown(std::size_t index) {
    const FrozenDp& f = frozen_[index];
    emit("dp_shown", Phase::Predict,
         {{"number", f.number}, {"task", f.task}, {"dp", f.dp_in_task}, {"deadline_ms", deadlines_[index]}});
  }

  void emit(std::string_view type, std::optional<Phase> phase, nlohmann::json payload) {
    nlohmann::json e = {{"session", id_},
                        {"treatment", std::string(name_of(treatment_))},
                        {"dp", type == "session_created" ? nlohmann::json(nullptr)
                                                         : nlohmann::json(current_number(type, payload))},
                        {"phase", phase ? nlohmann::json(std::string(name_of(*phase))) : nullptr},
                        {"ts", std::max(clock_(), last_ts_)},
                        {"type", std::string(type)},
                        {"payload", std::move(payload)}};
    apply(e);
    if (listener_) listener_(e);
  }

  int current_number(std::string_view type, const nlohmann::json& payload) const {
    if (type == "dp_shown") return payload.at("number").get<int>();
    return frozen_[cursor_].number;
  }

  void apply(const nlohmann::json& e) {
    const std::string type = e.at("type").get<std::string>();
    const auto& p = e.at("payload");
    const std::int64_t ts = e.at("ts").get<std::int64_t>();
    if (ts < last_ts_) throw ValidationError("log timestamps must be non-decreasing");
    if (type == "session_created") {
      if (p.at("scenario_fingerprint").get<std::string>() != scenario_fingerprint(*materials_.scenario))
        throw ValidationError("log was recorded against a different scenario");
      if (p.at("checkpoint_fingerprint").get<std::string>() != materials_.checkpoint_fingerprint)
        throw ValidationError("log was recorded against a different checkpoint");
      const auto& actions = p.at("agent_actions");
      if (actions.size() != frozen_.size())
        throw ValidationError("log DP count does not match the scenario");
      for (std::size_t i = 0; i < frozen_.size(); ++i)
        if (parse_action(actions[i].get<std::string>()) != frozen_[i].agent_action)
          throw ValidationError("frozen action mismatch at DP" + std::to_string(i + 1));
      deadlines_ = p.at("deadlines_ms").get<std::vector<std::int64_t>>();
      if (deadlines_.size() != frozen_.size()) throw ValidationError("deadline count mismatch");
      created_ts_ = ts;
    } else if (type == "dp_shown") {
      const int number = p.at("number").get<int>();
      if (number < 1 || static_cast<std::size_t>(number) > frozen_.size())
        throw ValidationError("dp_shown for unknown DP" + std::to_string(number));
      cursor_ = static_cast<std::size_t>(number - 1);
      phase_ = Phase::Predict;
      shown_ts_ = ts;
    } else if (type == "prediction") {
      if (phase_ != Phase::Predict) throw ValidationError("prediction outside the Predict phase");
      DecisionPointRecord r = record_from_json(p);
      if (r.dp != frozen_[cursor_].number) throw ValidationError("prediction for a DP not shown");
      records_.push_back(std::move(r));
      phase_ = Phase::Reveal;
    } else if (type == "advance") {
      if (phase_ != Phase::Reveal) throw ValidationError("advance outside the Reveal phase");
    } else if (type == "session_complete") {
      complete_ = true;
    } else {
      throw ValidationError("unknown event type '" + type + "'");
    }
    last_ts_ = ts;
    events_.push_back(e);
  }

  std::string id_;
  Treatment treatment_;
  StudyMaterials materials_;
  SessionConfig config_;
  Clock clock_;
  Listener listener_;

  std::vector<FrozenDp> frozen_;
  std::vector<std::int64_t> deadlines_;
  std::vector<std::optional<nlohmann::json>> reveal_cache_;
  std::vector<DecisionPointRecord> records_;
  std::vector<nlohmann::json> events_;
  std::size_t cursor_ = 0;
  Phase phase_ = Phase::Predict;
  bool complete_ = false;
  std::int64_t created_ts_ = 0;
  std::int64_t shown_ts_ = 0;
  std::int64_t last_ts_ = std::numeric_limits<std::int64_t>::min();
};

/// Parses a JSONL log; blank lines are skipped.
inline std::vector<nlohmann::json> parse_jsonl(const std::string& text) {
  std::vector<nlohmann::json> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace xrl
