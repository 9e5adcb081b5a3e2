#pragma once

// Decomposed-reward agent: one independent value network per reward type.
// The scalar action value is never stored; it is always the fixed-order sum
// of the six component values.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrl/config.hpp"
#include "xrl/error.hpp"
#include "xrl/game.hpp"
#include "xrl/io.hpp"
#include "xrl/network.hpp"
#include "xrl/rng.hpp"

namespace xrl {

/// q[c][a] = value of reward type c for action a, in points.
struct QMatrix {
  std::array<ActionValues, kNumRewardTypes> q{};

  double operator()(RewardType c, Action a) const { return q[index_of(c)][index_of(a)]; }
  friend bool operator==(const QMatrix&, const QMatrix&) = default;
};

/// out[a] = sum over c of m.q[c][a], accumulated in reward-type order.
inline ActionValues total_q(const QMatrix& m) {
  ActionValues out{};
  for (std::size_t c = 0; c < kNumRewardTypes; ++c)
    for (std::size_t a = 0; a < kNumActions; ++a) out[a] += m.q[c][a];
  return out;
}

/// Argmax over legal actions; ties resolve to the lowest quadrant.
inline Action greedy_action(const ActionValues& totals, const std::vector<Action>& legal) {
  if (legal.empty()) throw PreconditionError("no legal action");
  Action best = legal.front();
  for (Action a : legal)
    if (totals[index_of(a)] > totals[index_of(best)]) best = a;
  return best;
}

class DecomposedAgent {
public:
  DecomposedAgent() = default;

  static DecomposedAgent zeros(const Architecture& arch) {
    DecomposedAgent ag;
    for (auto& n : ag.nets_) n = ValueNet::zeros(arch);
    ag.config_.architecture = arch;
    return ag;
  }

  static DecomposedAgent initialized(const Architecture& arch, std::uint64_t seed) {
    DecomposedAgent ag;
    for (std::size_t c = 0; c < kNumRewardTypes; ++c)
      ag.nets_[c] = ValueNet::initialized(arch, mix_seed(seed, c));
    ag.config_.architecture = arch;
    return ag;
  }

  ValueNet& net(RewardType c) { return nets_[index_of(c)]; }
  const ValueNet& net(RewardType c) const { return nets_[index_of(c)]; }
  std::array<ValueNet, kNumRewardTypes>& nets() { return nets_; }
  const std::array<ValueNet, kNumRewardTypes>& nets() const { return nets_; }

  const Architecture& architecture() const { return nets_[0].architecture(); }

  /// Configuration the agent was trained with (metadata for checkpoints).
  TrainConfig& train_config() { return config_; }
  const TrainConfig& train_config() const { return config_; }

  QMatrix q_values(const StateTensor& x) const {
    QMatrix m;
    for (std::size_t c = 0; c < kNumRewardTypes; ++c) m.q[c] = nets_[c].forward(x.values());
    return m;
  }

  QMatrix q_values(const GameState& s) const { return q_values(encode_state(s)); }

  friend bool operator==(const DecomposedAgent& a, const DecomposedAgent& b) {
    return a.nets_ == b.nets_;
  }

private:
  std::array<ValueNet, kNumRewardTypes> nets_;
  TrainConfig config_;
};

/// Epsilon-greedy over legal actions. Exactly one uniform draw decides
/// explore/exploit, plus one index draw when exploring.
inline Action select_action(const ActionValues& totals, const std::vector<Action>& legal,
                            double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw PreconditionError("epsilon must lie in [0, 1]");
  if (legal.empty()) throw PreconditionError("no legal action");
  if (rng.uniform() < epsilon) return legal[rng.index(legal.size())];
  return greedy_action(totals, legal);
}

inline Action select_action(const DecomposedAgent& agent, const GameState& s, double epsilon,
                            Rng& rng) {
  return select_action(total_q(agent.q_values(s)), legal_actions(s), epsilon, rng);
}

struct Transition {
  StateTensor s;
  Action a = Action::AttackQ1;
  RewardVector r;
  StateTensor s_next;
  std::optional<Action> a_next;  // present iff not terminal
  bool terminal = false;
};

/// One decomposed SARSA step with precomputed forward passes of s (current
/// parameters) and the bootstrap values Q(s_next, a_next). Each component c
/// is updated on its own TD error
///   delta_c = r_c + gamma * Q_c(s', a') * [not terminal] - Q_c(s, a)
/// by an SGD step on 0.5 * (delta_c / value_scale)^2. Returns the deltas.
inline std::array<double, kNumRewardTypes> apply_sarsa(
    DecomposedAgent& agent, const std::array<ForwardPass, kNumRewardTypes>& current, Action a,
    const RewardVector& r, const std::optional<std::array<double, kNumRewardTypes>>& bootstrap,
    double lr, double gamma) {
  std::array<double, kNumRewardTypes> deltas{};
  const std::size_t ai = index_of(a);
  for (std::size_t c = 0; c < kNumRewardTypes; ++c) {
    const double next = bootstrap ? gamma * (*bootstrap)[c] : 0.0;
    const double delta = r.values[c] + next - current[c].out[ai];
    if (!std::isfinite(delta))
      throw NumericError("non-finite TD error for reward type " +
                         std::string(kRewardTypeNames[c]));
    deltas[c] = delta;
  }
  if (lr == 0.0) return deltas;
  for (std::size_t c = 0; c < kNumRewardTypes; ++c) {
    ValueNet& net = agent.nets()[c];
    const double K = net.architecture().value_scale;
    net.add_gradient(current[c], ai, lr * deltas[c] / (K * K));
  }
  return deltas;
}

inline std::array<double, kNumRewardTypes> sarsa_update(DecomposedAgent& agent, const Transition& t,
                                                        double lr, double gamma) {
  if (t.terminal == t.a_next.has_value())
    throw PreconditionError("transition: a_next must be present iff not terminal");
  std::array<ForwardPass, kNumRewardTypes> current;
  for (std::size_t c = 0; c < kNumRewardTypes; ++c)
    current[c] = agent.nets()[c].evaluate(t.s.values());
  std::optional<std::array<double, kNumRewardTypes>> bootstrap;
  if (!t.terminal) {
    std::array<double, kNumRewardTypes> b{};
    const std::size_t an = index_of(*t.a_next);
    for (std::size_t c = 0; c < kNumRewardTypes; ++c)
      b[c] = agent.nets()[c].forward(t.s_next.values())[an];
    bootstrap = b;
  }
  return apply_sarsa(agent, current, t.a, t.r, bootstrap, lr, gamma);
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   bytes 0-7    magic "XRLCKPT\n"
//   bytes 8-15   header length L (uint64, little-endian)
//   next L bytes header JSON: version, architecture, train_config,
//                reward_types (canonical order), nets[].layers[] with shapes
//                and layouts, payload_doubles
//   payload      for each reward type in canonical order: W1 (input-major
//                [inputs][hidden]), b1 [hidden], W2 ([4][hidden]), b2 [4];
//                IEEE-754 float64 little-endian
//   trailer      FNV-1a 64 of the payload (uint64, little-endian)

inline constexpr char kCheckpointMagic[8] = {'X', 'R', 'L', 'C', 'K', 'P', 'T', '\n'};
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]))
         << (8 * i);
  return v;
}

inline std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);

}  // namespace detail

inline nlohmann::json checkpoint_header(const DecomposedAgent& agent) {
  const Architecture& arch = agent.architecture();
  nlohmann::json types = nlohmann::json::array();
  nlohmann::json nets = nlohmann::json::array();
  for (RewardType c : kAllRewardTypes) {
    types.push_back(std::string(name_of(c)));
    nets.push_back(
        {{"reward_type", std::string(name_of(c))},
         {"layers",
          {{{"name", "w1"}, {"shape", {arch.inputs, arch.hidden}}, {"layout", "input-major"}},
           {{"name", "b1"}, {"shape", {arch.hidden}}},
           {{"name", "w2"}, {"shape", {Architecture::outputs, arch.hidden}}, {"layout", "output-major"}},
           {{"name", "b2"}, {"shape", {Architecture::outputs}}}}}});
  }
  return {{"format", "xrl-checkpoint"},
          {"version", kCheckpointVersion},
          {"architecture", to_json(arch)},
          {"train_config", to_json(agent.train_config())},
          {"reward_types", types},
          {"layer_order", {"w1", "b1", "w2", "b2"}},
          {"byte_order", "little"},
          {"nets", nets},
          {"payload_doubles", arch.parameter_count() * kNumRewardTypes}};
}

inline std::string serialize_checkpoint(const DecomposedAgent& agent) {
  const std::string header = checkpoint_header(agent).dump();
  std::string payload;
  payload.reserve(agent.architecture().parameter_count() * kNumRewardTypes * 8);
  for (const auto& net : agent.nets())
    for (double v : net.flat()) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      detail::put_u64(payload, bits);
    }
  std::string out(kCheckpointMagic, 8);
  detail::put_u64(out, header.size());
  out += header;
  out += payload;
  detail::put_u64(out, detail::fnv1a(payload.data(), payload.size()));
  return out;
}

/// Reads the header only; throws LoadError on any structural problem.
inline nlohmann::json read_checkpoint_header(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw LoadError("not an xrl checkpoint (bad magic)");
  const std::uint64_t len = detail::get_u64(bytes, 8);
  if (len > bytes.size() - 16) throw LoadError("checkpoint truncated inside header");
  try {
    return nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
}

inline DecomposedAgent deserialize_checkpoint(const std::string& bytes) {
  const nlohmann::json header = read_checkpoint_header(bytes);
  const std::size_t header_end = 16 + detail::get_u64(bytes, 8);
  if (header.value("version", -1) != kCheckpointVersion)
    throw LoadError("unsupported checkpoint version");

  DecomposedAgent agent;
  Architecture arch;
  try {
    arch = architecture_from_json(header.at("architecture"));
    agent.train_config() = train_config_from_json(header.at("train_config"));
  } catch (const std::exception& e) {
    throw LoadError(std::string("checkpoint architecture/config invalid: ") + e.what());
  }
  const auto& types = header.at("reward_types");
  if (!types.is_array() || types.size() != kNumRewardTypes)
    throw LoadError("checkpoint must contain exactly 6 reward-type networks");
  for (std::size_t c = 0; c < kNumRewardTypes; ++c)
    if (types[c].get<std::string>() != kRewardTypeNames[c])
      throw LoadError("checkpoint reward types are not in canonical order");
  if (header.value("payload_doubles", std::size_t{0}) != arch.parameter_count() * kNumRewardTypes)
    throw LoadError("checkpoint payload size does not match its architecture");

  const std::size_t per_net = arch.parameter_count();
  const std::size_t payload_bytes = per_net * kNumRewardTypes * 8;
  if (bytes.size() != header_end + payload_bytes + 8)
    throw LoadError("checkpoint truncated or has trailing bytes (expected " +
                    std::to_string(header_end + payload_bytes + 8) + " bytes, got " +
                    std::to_string(bytes.size()) + ")");
  if (detail::fnv1a(bytes.data() + header_end, payload_bytes) !=
      detail::get_u64(bytes, header_end + payload_bytes))
    throw LoadError("checkpoint payload checksum mismatch");

  std::vector<double> values(per_net);
  for (std::size_t c = 0; c < kNumRewardTypes; ++c) {
    for (std::size_t i = 0; i < per_net; ++i) {
      const std::uint64_t bits = detail::get_u64(bytes, header_end + (c * per_net + i) * 8);
      std::memcpy(&values[i], &bits, 8);
    }
    ValueNet net = ValueNet::zeros(arch);
    net.assign_flat(values);
    if (!net.all_finite()) throw LoadError("checkpoint holds non-finite parameters");
    agent.nets()[c] = std::move(net);
  }
  return agent;
}

inline void save_checkpoint(const DecomposedAgent& agent, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(agent));
}

inline DecomposedAgent load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const NotFoundError&) {
    throw NotFoundError("checkpoint not found: " + path.string());
  }
  return deserialize_checkpoint(bytes);
}

}  // namespace xrl
