#include <gtest/gtest.h>

#include <memory>
#include <sstream>

#include "xrl/aggregate.hpp"
#include "xrl/study.hpp"

using namespace xrl;

namespace {

std::filesystem::path data_dir_for_tests() { return XRL_DEFAULT_DATA_DIR; }

struct ManualClock {
  std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(1'000);
  Clock fn() const {
    return [p = now] { return *p; };
  }
  void advance(std::int64_t ms) const { *now += ms; }
};

std::shared_ptr<const DecomposedAgent> test_agent() {
  Architecture a;
  a.hidden = 16;
  static const auto agent = std::make_shared<const DecomposedAgent>(DecomposedAgent::initialized(a, 21));
  return agent;
}

StudyMaterials materials(bool with_table = true) {
  StudyMaterials m;
  m.scenario = std::make_shared<const Scenario>(load_scenario(data_dir_for_tests() / "study14.json"));
  m.scenario_name = "study14";
  m.agent = test_agent();
  m.checkpoint_fingerprint = checkpoint_fingerprint(*m.agent);
  if (with_table) {
    auto t = std::make_shared<NormTable>();
    for (const auto& f : freeze_scenario(*m.scenario, *m.agent, {})) t->observe(saliency_stack(*m.agent, f.shown));
    m.norm_table = t;
  }
  return m;
}

Session open(Treatment t, const ManualClock& clock, std::string id = "s1") {
  return Session::create(std::move(id), t, materials(), {}, clock.fn());
}

std::string quadrant_of(Action a) { return std::string(name_of(target_of(a))); }

Action wrong_action(const FrozenDp& f) {
  for (Action a : legal_actions(f.shown))
    if (a != f.agent_action) return a;
  throw std::logic_error("DP has a single legal action");
}

}  // namespace

TEST(Deadlines, FirstIsLonger) {
  const auto d = SessionConfig{}.deadlines(14);
  ASSERT_EQ(d.size(), 14u);
  EXPECT_EQ(d[0], 720'000);
  for (std::size_t i = 1; i < d.size(); ++i) EXPECT_EQ(d[i], 480'000);
  EXPECT_TRUE(SessionConfig{}.deadlines(0).empty());
}

TEST(Freeze, ActionsAreGreedyOnShownStates) {
  const StudyMaterials m = materials(false);
  const auto frozen = freeze_scenario(*m.scenario, *m.agent, {});
  ASSERT_EQ(frozen.size(), 14u);
  double score = 0.0;
  for (std::size_t i = 0; i < frozen.size(); ++i) {
    const FrozenDp& f = frozen[i];
    EXPECT_EQ(f.number, static_cast<int>(i + 1));
    EXPECT_EQ(f.agent_action, greedy_action(total_q(m.agent->q_values(f.shown)), legal_actions(f.shown)));
    EXPECT_TRUE(is_legal(f.shown, f.agent_action));
    EXPECT_EQ(f.shown.cumulative_score, score);
    score = f.outcome.next_state.cumulative_score;
  }
  EXPECT_EQ(frozen[0].task, 1);
  EXPECT_EQ(frozen[4].task, 2);
  EXPECT_EQ(frozen[4].dp_in_task, 1);
}

TEST(Freeze, CarriesAgentHpWithinATask) {
  Scenario sc = load_scenario(data_dir_for_tests() / "study14.json");
  for (auto& task : sc.tasks)
    for (std::size_t d = 1; d < task.size(); ++d) task[d].agent_hp.reset();
  const auto frozen = freeze_scenario(sc, *test_agent(), {});
  for (std::size_t i = 1; i < frozen.size(); ++i)
    if (frozen[i].dp_in_task > 1) {
      EXPECT_EQ(frozen[i].shown.agent_hp, frozen[i - 1].outcome.next_state.agent_hp);
    }
}

TEST(Session, RequiresNormTableForSaliency) {
  const ManualClock clock;
  for (Treatment t : kAllTreatments) {
    if (shows_saliency(t)) {
      EXPECT_THROW(Session::create("x", t, materials(false), {}, clock.fn()), NotFoundError);
    } else {
      EXPECT_NO_THROW(Session::create("x", t, materials(false), {}, clock.fn()));
    }
  }
}

TEST(Session, PredictViewHidesExplanations) {
  const ManualClock clock;
  for (Treatment t : kAllTreatments) {
    Session s = open(t, clock);
    const auto v = s.view();
    EXPECT_EQ(v.at("phase"), "Predict");
    EXPECT_EQ(v.at("prompt").at("question"), std::string(kPredictQuestion));
    EXPECT_EQ(v.at("prompt").at("choices").size(), legal_actions(s.frozen()[0].shown).size());
    EXPECT_EQ(v.at("remaining_ms"), 720'000);
    for (const char* k : {"agent_action", "reward_bars", "saliency", "events", "score_delta", "result"})
      EXPECT_FALSE(v.contains(k)) << k;
  }
}

TEST(Session, RevealGatesContentByTreatment) {
  const ManualClock clock;
  for (Treatment t : kAllTreatments) {
    Session s = open(t, clock);
    const FrozenDp& f = s.frozen()[0];
    const auto r = s.submit(quadrant_of(f.agent_action), "because");
    EXPECT_EQ(r.at("agent_action"), std::string(name_of(f.agent_action)));
    EXPECT_TRUE(r.contains("events"));
    EXPECT_EQ(r.contains("reward_bars"), shows_rewards(t));
    EXPECT_EQ(r.contains("saliency"), shows_saliency(t));
    const std::size_t legal = legal_actions(f.shown).size();
    if (shows_rewards(t)) {
      EXPECT_EQ(r.at("reward_bars").size(), legal);
      for (const auto& row : r.at("reward_bars")) EXPECT_EQ(row.at("bars").size(), kNumRewardTypes);
    }
    if (shows_saliency(t)) {
      const auto& rows = r.at("saliency");
      const std::size_t actions = t == Treatment::Saliency ? 1 : legal;
      EXPECT_EQ(rows.size(), actions * kNumRewardTypes);
      if (t == Treatment::Saliency) {
        for (const auto& row : rows) EXPECT_EQ(row.at("action"), std::string(name_of(f.agent_action)));
      }
      for (const auto& row : rows) {
        EXPECT_EQ(row.at("maps").size(), kNumPerturbations);
        for (const auto& m : row.at("maps")) {
          EXPECT_EQ(m.at("png").get<std::string>().rfind("data:image/png;base64,", 0), 0u);
          for (const auto& o : m.at("objects")) {
            EXPECT_GE(o.at("value").get<double>(), 0.0);
            EXPECT_LE(o.at("value").get<double>(), 1.0);
          }
        }
      }
    }
    EXPECT_EQ(s.view().at("phase"), "Reveal");
  }
}

TEST(Session, ScoresPredictions) {
  const ManualClock clock;
  Session s = open(Treatment::Control, clock);
  const FrozenDp& f = s.frozen()[0];
  clock.advance(1'234);
  const auto r = s.submit(quadrant_of(f.agent_action), "tab\there, \"quoted\"\nnewline");
  EXPECT_EQ(r.at("correct"), true);
  EXPECT_EQ(r.at("elapsed_ms"), 1'234);
  EXPECT_EQ(s.records()[0].rationale, "tab\there, \"quoted\"\nnewline");
  EXPECT_THROW(s.submit(quadrant_of(f.agent_action), ""), ConflictError);
  s.advance();
  const FrozenDp& g = s.frozen()[1];
  EXPECT_EQ(s.submit(quadrant_of(wrong_action(g)), "").at("correct"), false);
}

TEST(Session, RejectsBadQuadrants) {
  const ManualClock clock;
  Session s = open(Treatment::Control, clock);
  EXPECT_THROW(s.submit("Q5", ""), ValidationError);
  EXPECT_THROW(s.submit("", ""), ValidationError);
  EXPECT_EQ(s.phase(), Phase::Predict);

  StudyMaterials m = materials(false);
  Scenario sc = *m.scenario;
  sc.tasks[0][0].quadrants[2].reset();
  m.scenario = std::make_shared<const Scenario>(sc);
  Session t = Session::create("x", Treatment::Control, m, {}, clock.fn());
  EXPECT_THROW(t.submit("Q3", ""), ValidationError);
  EXPECT_EQ(t.view().at("prompt").at("choices").size(), 3u);
}

TEST(Session, DeadlineRecordsTimeout) {
  const ManualClock clock;
  Session s = open(Treatment::Rewards, clock);
  clock.advance(719'999);
  EXPECT_EQ(s.view().at("phase"), "Predict");
  EXPECT_EQ(s.remaining_ms(), 1);
  clock.advance(1);
  const auto v = s.view();
  EXPECT_EQ(v.at("phase"), "Reveal");
  EXPECT_EQ(v.at("result").at("timed_out"), true);
  EXPECT_TRUE(v.at("result").at("predicted").is_null());
  EXPECT_EQ(v.at("result").at("correct"), false);
  EXPECT_TRUE(v.contains("reward_bars"));
  s.advance();
  clock.advance(500'000);
  const auto late = s.submit(quadrant_of(s.frozen()[1].agent_action), "late");
  EXPECT_EQ(late.at("timed_out"), true);
  EXPECT_EQ(late.at("correct"), false);
  EXPECT_EQ(s.records().back().elapsed_ms, 480'000);
}

TEST(Session, WalksAllDecisionPoints) {
  const ManualClock clock;
  Session s = open(Treatment::Everything, clock);
  EXPECT_THROW(s.advance(), ConflictError);
  for (int i = 0; i < 14; ++i) {
    const auto cur = s.view().at("cursor");
    EXPECT_EQ(cur.at("number"), i + 1);
    EXPECT_EQ(cur.at("task"), s.frozen()[static_cast<std::size_t>(i)].task);
    EXPECT_EQ(cur.at("of"), 14);
    s.submit(quadrant_of(s.frozen()[static_cast<std::size_t>(i)].agent_action), "");
    clock.advance(10);
    const auto a = s.advance();
    EXPECT_EQ(a.at("complete"), i == 13);
    if (i == 3) {
      EXPECT_EQ(a.at("cursor").at("task"), 2);
      EXPECT_EQ(a.at("cursor").at("dp"), 1);
    }
  }
  EXPECT_TRUE(s.complete());
  const auto v = s.view();
  EXPECT_EQ(v.at("prompt"), std::string(kFinalPromptToken));
  EXPECT_THROW(s.advance(), ConflictError);
  EXPECT_THROW(s.submit("Q1", ""), ConflictError);
  EXPECT_EQ(s.records().size(), 14u);
  EXPECT_EQ(s.status().at("type"), "complete");
}

TEST(Session, LogIsWellFormedAndReplays) {
  const ManualClock clock;
  std::vector<nlohmann::json> streamed;
  Session s = Session::create("replay", Treatment::Saliency, materials(), {}, clock.fn(),
                              [&](const nlohmann::json& e) { streamed.push_back(e); });
  for (int i = 0; i < 5; ++i) {
    clock.advance(100 + i);
    const FrozenDp& f = s.frozen()[s.cursor()];
    if (i == 2) {
      clock.advance(480'000);
      s.poll();
    } else {
      s.submit(quadrant_of(i % 2 ? wrong_action(f) : f.agent_action), "r" + std::to_string(i));
    }
    s.advance();
  }
  EXPECT_EQ(streamed, s.events());
  const auto lines = parse_jsonl(s.log_jsonl());
  ASSERT_EQ(lines, s.events());
  std::int64_t last = 0;
  for (const auto& e : lines) {
    for (const char* k : {"session", "treatment", "dp", "phase", "ts", "type", "payload"}) EXPECT_TRUE(e.contains(k));
    EXPECT_GE(e.at("ts").get<std::int64_t>(), last);
    last = e.at("ts").get<std::int64_t>();
  }
  EXPECT_EQ(lines.front().at("type"), "session_created");

  Session r = Session::replay(lines, materials(), {}, clock.fn());
  EXPECT_EQ(r.log_jsonl(), s.log_jsonl());
  EXPECT_EQ(r.cursor(), s.cursor());
  EXPECT_EQ(r.phase(), s.phase());
  ASSERT_EQ(r.records().size(), s.records().size());
  for (std::size_t i = 0; i < r.records().size(); ++i) EXPECT_EQ(to_json(r.records()[i]), to_json(s.records()[i]));
  EXPECT_EQ(r.records()[1].rationale, "r1");
  EXPECT_TRUE(r.records()[2].timed_out);

  StudyMaterials other = materials();
  Architecture a;
  a.hidden = 16;
  const auto different = std::make_shared<const DecomposedAgent>(DecomposedAgent::initialized(a, 22));
  other.agent = different;
  other.checkpoint_fingerprint = checkpoint_fingerprint(*different);
  EXPECT_THROW(Session::replay(lines, other, {}, clock.fn()), ValidationError);
  auto shuffled = lines;
  std::swap(shuffled[1], shuffled[2]);
  EXPECT_THROW(Session::replay(shuffled, materials(), {}, clock.fn()), ValidationError);
}

TEST(Session, ExpiresAfterConfiguredTime) {
  const ManualClock clock;
  SessionConfig cfg;
  cfg.expires_after_ms = 10'000;
  Session s = Session::create("e", Treatment::Control, materials(false), cfg, clock.fn());
  clock.advance(10'000);
  EXPECT_NO_THROW(s.view());
  clock.advance(1);
  EXPECT_THROW(s.view(), GoneError);
  EXPECT_THROW(s.submit("Q1", ""), GoneError);
  EXPECT_THROW(s.advance(), GoneError);
}

TEST(Explanation, KeyPathsCollapseArrays) {
  const nlohmann::json j = {{"a", {{"b", 1}}}, {"c", nlohmann::json::array({{{"d", 1}}, {{"e", 2}}})}};
  EXPECT_EQ(key_paths(j), (std::set<std::string>{"a", "a.b", "c", "c[].d", "c[].e"}));
}

TEST(Aggregate, AccuracyAndStandardError) {
  const ManualClock clock;
  std::vector<std::vector<nlohmann::json>> logs;
  for (int i = 0; i < 4; ++i) {
    Session s = open(Treatment::Rewards, clock, "s" + std::to_string(i));
    const FrozenDp& f = s.frozen()[0];
    s.submit(quadrant_of(i == 0 ? wrong_action(f) : f.agent_action), "");
    logs.push_back(s.events());
  }
  logs.push_back({});
  const AccuracyTable t = aggregate(logs);
  EXPECT_EQ(t.dp_count, 14);
  ASSERT_EQ(t.cells.size(), 14u * kNumTreatments);
  const AccuracyCell& c = t.at(1, Treatment::Rewards);
  EXPECT_EQ(c.n, 4);
  EXPECT_EQ(c.correct, 3);
  EXPECT_DOUBLE_EQ(*c.accuracy(), 0.75);
  EXPECT_NEAR(*c.standard_error(), 0.2165063509, 1e-9);
  EXPECT_FALSE(t.at(2, Treatment::Rewards).accuracy());
  EXPECT_FALSE(t.at(1, Treatment::Control).standard_error());

  const std::string csv = to_csv(t);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "dp,treatment,n,correct,accuracy,se");
  std::getline(in, line);
  EXPECT_EQ(line, "1,Control,0,0,,");
  std::getline(in, line);
  EXPECT_EQ(line, "1,Saliency,0,0,,");
  std::getline(in, line);
  EXPECT_EQ(line, "1,Rewards,4,3,0.75,0.21650635094610965");
  std::size_t rows = 3;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 14u * kNumTreatments);
}

TEST(Aggregate, RejectsMixedScenariosAndForeignLogs) {
  const ManualClock clock;
  Session a = open(Treatment::Control, clock);
  StudyMaterials m = materials(false);
  Scenario sc = *m.scenario;
  sc.tasks[0][0].quadrants[0]->hp = 99;
  m.scenario = std::make_shared<const Scenario>(sc);
  Session b = Session::create("b", Treatment::Control, m, {}, clock.fn());
  EXPECT_THROW(aggregate({a.events(), b.events()}), ValidationError);
  std::vector<nlohmann::json> headless(a.events().begin() + 1, a.events().end());
  EXPECT_THROW(aggregate({headless}), ValidationError);
  EXPECT_EQ(aggregate({}).cells.size(), 0u);
}
