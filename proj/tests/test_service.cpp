#include <gtest/gtest.h>

#include <boost/asio/connect.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <cstdlib>
#include <sstream>
#include <thread>
#include <sys/wait.h>
#include <unistd.h>

#include "xrl/cli.hpp"
#include "xrl/server.hpp"

using namespace xrl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("xrl_svc_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::shared_ptr<const DecomposedAgent> test_agent() {
  Architecture a;
  a.hidden = 16;
  static const auto agent = std::make_shared<const DecomposedAgent>(DecomposedAgent::initialized(a, 31));
  return agent;
}

struct Fixture {
  std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(5'000);
  int next_id = 0;
  Service service;

  Fixture(fs::path log_dir, bool with_table = true, fs::path static_dir = {})
      : service(ServiceConfig{XRL_DEFAULT_DATA_DIR, std::move(log_dir), std::move(static_dir), {}}, test_agent(),
                with_table ? std::make_shared<const NormTable>() : nullptr, [p = now] { return *p; },
                [this] { return "id" + std::to_string(next_id++); }) {}

  HttpResponse call(std::string method, std::string target, std::string body = "") {
    return service.handle({std::move(method), std::move(target), std::move(body)});
  }
  std::string create(const std::string& treatment) {
    const auto r = call("POST", "/sessions", nlohmann::json{{"scenario", "study14"}, {"treatment", treatment}}.dump());
    EXPECT_EQ(r.status, 201) << r.body;
    return nlohmann::json::parse(r.body).at("id").get<std::string>();
  }
};

std::string prediction(const std::string& q, const std::string& why = "") {
  return nlohmann::json{{"quadrant", q}, {"rationale", why}}.dump();
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "xrl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

// Small trained checkpoint plus a norm table, built once.
struct CliMaterials {
  fs::path dir = scratch("cli");
  fs::path config = dir / "config.json";
  fs::path agent = dir / "agent.bin";
  fs::path norm = dir / "norm.json";
  CliMaterials() {
    nlohmann::json cfg = to_json(TrainConfig{});
    cfg["episodes"] = 20;
    cfg["architecture"]["hidden"] = 8;
    write_file_atomic(config, cfg.dump(2));
    EXPECT_EQ(cli({"train", "--config", config.string(), "--out", agent.string()}), kExitOk);
    EXPECT_EQ(cli({"normtable", "--agent", agent.string(), "--episodes", "3", "--out", norm.string()}), kExitOk);
  }
};

const CliMaterials& cli_materials() {
  static const CliMaterials m;
  return m;
}

std::string policy_predictions(const fs::path& agent) {
  const StudyMaterials m = load_materials(agent, "study14.json", std::nullopt);
  std::string out = "# replay of the frozen policy\n";
  for (const auto& f : freeze_scenario(*m.scenario, *m.agent, {}))
    out += std::string(name_of(target_of(f.agent_action))) + "\twhy DP" + std::to_string(f.number) + "\n";
  return out;
}

}  // namespace

TEST(Routing, TargetParsing) {
  const ParsedTarget t = parse_target("//sessions/a%20b/view?dir=x%2Fy&flag");
  EXPECT_EQ(t.segments, (std::vector<std::string>{"sessions", "a b", "view"}));
  EXPECT_EQ(t.query.at("dir"), "x/y");
  EXPECT_EQ(t.query.at("flag"), "");
  EXPECT_THROW(parse_target("/a?x=%zz"), ValidationError);
}

TEST(Routing, ContainedPath) {
  const fs::path root = scratch("contained");
  EXPECT_EQ(contained_path(root, "a/b"), fs::weakly_canonical(root / "a/b"));
  EXPECT_EQ(contained_path(root, "/a"), fs::weakly_canonical(root / "a"));
  EXPECT_THROW(contained_path(root, "../x"), NotFoundError);
  EXPECT_THROW(contained_path(root, "a/../../x"), NotFoundError);
}

TEST(Service, SessionLifecycleStatusCodes) {
  Fixture f(scratch("life"));
  const std::string id = f.create("Rewards");
  EXPECT_EQ(f.call("GET", "/sessions/" + id + "/view").status, 200);
  EXPECT_EQ(f.call("GET", "/sessions/nope/view").status, 404);
  EXPECT_EQ(f.call("DELETE", "/sessions/" + id + "/view").status, 405);
  EXPECT_EQ(f.call("GET", "/sessions").status, 405);
  EXPECT_EQ(f.call("POST", "/sessions/" + id + "/advance").status, 409);
  EXPECT_EQ(f.call("POST", "/sessions/" + id + "/prediction", "{bad json").status, 400);
  EXPECT_EQ(f.call("POST", "/sessions/" + id + "/prediction", "{}").status, 400);
  EXPECT_EQ(f.call("POST", "/sessions/" + id + "/prediction", prediction("Q7")).status, 400);
  const auto ok = f.call("POST", "/sessions/" + id + "/prediction", prediction("Q1", "first"));
  EXPECT_EQ(ok.status, 200);
  EXPECT_TRUE(nlohmann::json::parse(ok.body).contains("reward_bars"));
  EXPECT_EQ(f.call("POST", "/sessions/" + id + "/prediction", prediction("Q1")).status, 409);
  EXPECT_EQ(f.call("POST", "/sessions/" + id + "/advance").status, 200);
  EXPECT_EQ(f.call("GET", "/nowhere").status, 404);

  const auto err = nlohmann::json::parse(f.call("GET", "/sessions/nope/view").body);
  EXPECT_EQ(err.at("error"), "not_found");
  EXPECT_TRUE(err.contains("message"));
}

TEST(Service, CreateValidation) {
  Fixture f({}, false);
  auto body = [](const char* sc, const char* t) { return nlohmann::json{{"scenario", sc}, {"treatment", t}}.dump(); };
  EXPECT_EQ(f.call("POST", "/sessions", body("missing", "Control")).status, 404);
  EXPECT_EQ(f.call("POST", "/sessions", body("../study14", "Control")).status, 404);
  EXPECT_EQ(f.call("POST", "/sessions", body("study14", "Bogus")).status, 400);
  EXPECT_EQ(f.call("POST", "/sessions", body("study14", "Saliency")).status, 404);
  EXPECT_EQ(f.call("POST", "/sessions", body("study14", "Control")).status, 201);
  EXPECT_EQ(f.service.session_count(), 1u);
}

TEST(Service, ExpiredSessionIsGone) {
  Fixture f({});
  const std::string id = f.create("Control");
  *f.now += SessionConfig{}.expires_after_ms + 1;
  EXPECT_EQ(f.call("GET", "/sessions/" + id + "/view").status, 410);
  EXPECT_EQ(f.call("POST", "/sessions/" + id + "/advance").status, 410);
}

TEST(Service, LogsAggregateAndRestore) {
  const fs::path logs = scratch("logs");
  std::string id;
  std::string log_text;
  {
    Fixture f(logs);
    id = f.create("Everything");
    f.call("POST", "/sessions/" + id + "/prediction", prediction("Q2", "r"));
    f.call("POST", "/sessions/" + id + "/advance");
    const auto log = f.call("GET", "/sessions/" + id + "/log");
    EXPECT_EQ(log.status, 200);
    EXPECT_EQ(log.content_type, "application/x-ndjson");
    log_text = log.body;
    EXPECT_EQ(read_file(logs / (id + ".jsonl")), log_text);

    const auto agg = f.call("GET", "/aggregate");
    EXPECT_EQ(agg.status, 200);
    EXPECT_EQ(agg.content_type, "text/csv");
    EXPECT_EQ(agg.body, to_csv(aggregate(read_log_dir(logs))));
    EXPECT_EQ(f.call("GET", "/aggregate?dir=../..").status, 404);
    EXPECT_EQ(f.call("GET", "/aggregate?dir=missing").status, 404);
  }
  write_file_atomic(logs / "garbage.jsonl", "{\"type\":\"nonsense\"}\n");
  Fixture g(logs);
  EXPECT_EQ(g.service.restore(), 1u);
  const auto log = g.call("GET", "/sessions/" + id + "/log");
  EXPECT_EQ(log.body, log_text);
  const auto view = nlohmann::json::parse(g.call("GET", "/sessions/" + id + "/view").body);
  EXPECT_EQ(view.at("cursor").at("number"), 2);
  EXPECT_EQ(view.at("phase"), "Predict");
}

TEST(Service, StaticFiles) {
  const fs::path web = scratch("web");
  write_file_atomic(web / "index.html", "<html></html>");
  Fixture f({}, true, web);
  const auto r = f.call("GET", "/");
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.body, "<html></html>");
  EXPECT_EQ(r.content_type.rfind("text/html", 0), 0u);
  EXPECT_EQ(f.call("GET", "/../../etc/passwd").status, 404);
  EXPECT_EQ(f.call("GET", "/%2e%2e/%2e%2e/etc/passwd").status, 404);
  EXPECT_EQ(f.call("GET", "/missing.js").status, 404);
}

TEST(Server, HttpAndWebSocketOverLoopback) {
  namespace beast = boost::beast;
  namespace http = beast::http;
  using tcp = boost::asio::ip::tcp;
  Fixture f({});
  Server server(f.service, "127.0.0.1", 0);
  std::thread runner([&] { server.run(); });

  boost::asio::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect({boost::asio::ip::make_address("127.0.0.1"), server.port()});
  auto request = [&](http::verb verb, const std::string& target, const std::string& body) {
    http::request<http::string_body> req{verb, target, 11};
    req.set(http::field::host, "127.0.0.1");
    req.body() = body;
    req.prepare_payload();
    http::write(sock, req);
    beast::flat_buffer buf;
    http::response<http::string_body> res;
    http::read(sock, buf, res);
    return res;
  };
  const auto created = request(http::verb::post, "/sessions", R"({"scenario":"study14","treatment":"Control"})");
  EXPECT_EQ(created.result_int(), 201);
  const std::string id = nlohmann::json::parse(created.body()).at("id").get<std::string>();
  const auto view = request(http::verb::get, "/sessions/" + id + "/view", "");
  EXPECT_EQ(view.result_int(), 200);
  EXPECT_EQ(nlohmann::json::parse(view.body()).at("phase"), "Predict");
  EXPECT_EQ(request(http::verb::get, "/sessions/zzz/view", "").result_int(), 404);

  tcp::socket ws_sock(ioc);
  ws_sock.connect({boost::asio::ip::make_address("127.0.0.1"), server.port()});
  beast::websocket::stream<tcp::socket&> ws(ws_sock);
  ws.handshake("127.0.0.1", "/sessions/" + id + "/events");
  beast::flat_buffer buf;
  ws.read(buf);
  const auto tick = nlohmann::json::parse(beast::buffers_to_string(buf.data()));
  EXPECT_EQ(tick.at("type"), "tick");
  EXPECT_EQ(tick.at("dp"), 1);
  EXPECT_EQ(tick.at("remaining_ms"), 720'000);

  server.stop();
  runner.join();
}

TEST(Cli, PredictionsFile) {
  const auto p = parse_predictions("# header\n\nQ1\tbecause\tit is\r\n-\nAttackQ3\n  Q4  \n");
  ASSERT_EQ(p.size(), 4u);
  EXPECT_EQ(p[0].action, Action::AttackQ1);
  EXPECT_EQ(p[0].rationale, "because\tit is");
  EXPECT_FALSE(p[1].action);
  EXPECT_EQ(p[2].action, Action::AttackQ3);
  EXPECT_EQ(p[3].action, Action::AttackQ4);
  EXPECT_THROW(parse_predictions("Q9\n"), ValidationError);
}

TEST(Cli, AddressParsing) {
  EXPECT_EQ(parse_address("127.0.0.1:8080"), (std::pair<std::string, unsigned short>{"127.0.0.1", 8080}));
  EXPECT_THROW(parse_address("nohost"), Error);
  EXPECT_THROW(parse_address("h:99999"), Error);
}

TEST(Cli, UsageErrorsExitOne) {
  std::string out, err;
  EXPECT_EQ(cli({}, &out, &err), kExitInvalid);
  EXPECT_EQ(cli({"simulate", "--agent", "x"}, &out, &err), kExitInvalid);
  EXPECT_NE(err.find("--scenario"), std::string::npos);
  EXPECT_EQ(cli({"bogus"}, &out, &err), kExitInvalid);
  EXPECT_EQ(cli({"aggregate", "--logs", "/definitely/missing"}, &out, &err), kExitInvalid);
}

TEST(Cli, PrintDefaultsIsTheDefaultConfig) {
  std::string out;
  EXPECT_EQ(cli({"--print-defaults"}, &out), kExitOk);
  EXPECT_EQ(nlohmann::json::parse(out), to_json(TrainConfig{}));
  std::string sub;
  EXPECT_EQ(cli({"train", "--print-defaults"}, &sub), kExitOk);
  EXPECT_EQ(sub, out);
}

TEST(Cli, TrainingIsReproducible) {
  const auto& m = cli_materials();
  const fs::path again = m.dir / "again.bin";
  const fs::path metrics = m.dir / "metrics.csv";
  EXPECT_EQ(cli({"train", "--config", m.config.string(), "--out", again.string(), "--metrics", metrics.string()}),
            kExitOk);
  EXPECT_EQ(read_file(again), read_file(m.agent));
  const std::string csv = read_file(metrics);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
  EXPECT_EQ(cli({"train", "--config", m.config.string(), "--out", again.string(), "--seed", "2"}), kExitOk);
  EXPECT_NE(read_file(again), read_file(m.agent));
}

TEST(Cli, DeterministicSimulateAndAggregate) {
  const auto& m = cli_materials();
  const fs::path preds = m.dir / "preds.txt";
  write_file_atomic(preds, policy_predictions(m.agent));
  const fs::path logs = scratch("simlogs");
  auto run = [&](const fs::path& log, std::string* summary) {
    return cli({"simulate", "--agent", m.agent.string(), "--scenario", "study14.json", "--treatment", "Everything",
                "--predictions", preds.string(), "--normtable", m.norm.string(), "--out", log.string(),
                "--deterministic"},
               summary);
  };
  std::string s1, s2;
  ASSERT_EQ(run(logs / "a.jsonl", &s1), kExitOk);
  ASSERT_EQ(run(m.dir / "b.jsonl", &s2), kExitOk);
  EXPECT_EQ(read_file(logs / "a.jsonl"), read_file(m.dir / "b.jsonl"));
  EXPECT_EQ(s1, s2);
  EXPECT_NE(s1.find("1,Everything,1,1,1,0\n"), std::string::npos);

  const auto events = parse_jsonl(read_file(logs / "a.jsonl"));
  EXPECT_EQ(events.front().at("session").get<std::string>().rfind("sim-Everything-", 0), 0u);
  EXPECT_EQ(events.back().at("type"), "session_complete");
  std::string agg;
  EXPECT_EQ(cli({"aggregate", "--logs", logs.string()}, &agg), kExitOk);
  EXPECT_EQ(agg, s1);

  const fs::path short_preds = m.dir / "short.txt";
  write_file_atomic(short_preds, "Q1\nQ2\n");
  std::string err;
  EXPECT_EQ(cli({"simulate", "--agent", m.agent.string(), "--scenario", "study14.json", "--treatment", "Control",
                 "--predictions", short_preds.string(), "--out", (m.dir / "c.jsonl").string()},
                nullptr, &err),
            kExitInvalid);
  EXPECT_FALSE(fs::exists(m.dir / "c.jsonl"));
  EXPECT_EQ(cli({"simulate", "--agent", m.agent.string(), "--scenario", "study14.json", "--treatment", "Saliency",
                 "--predictions", preds.string(), "--out", (m.dir / "d.jsonl").string()},
                nullptr, &err),
            kExitInvalid);
}

TEST(Cli, TimeoutsInSimulation) {
  const auto& m = cli_materials();
  const StudyMaterials mat = load_materials(m.agent, "study14.json", std::nullopt);
  std::vector<Prediction> preds(14);
  const SimulationResult r = simulate(mat, Treatment::Control, preds, true);
  const auto events = parse_jsonl(r.log);
  int timeouts = 0;
  for (const auto& e : events)
    if (e.at("type") == "prediction") timeouts += e.at("payload").at("timed_out").get<bool>() ? 1 : 0;
  EXPECT_EQ(timeouts, 14);
  EXPECT_NE(r.summary_csv.find("1,Control,1,0,0,0\n"), std::string::npos);
}

TEST(Cli, ExportSaliency) {
  const auto& m = cli_materials();
  const fs::path out = m.dir / "png";
  EXPECT_EQ(cli({"export-saliency", "--agent", m.agent.string(), "--scenario", "study14.json", "--dp", "1",
                 "--normtable", m.norm.string(), "--out-dir", out.string()}),
            kExitOk);
  std::size_t pngs = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.path().extension() != ".png") continue;
    ++pngs;
    const RgbImage img = decode_png(read_file(e.path()));
    EXPECT_EQ(img.width, kGrid);
  }
  EXPECT_GT(pngs, 0u);
  EXPECT_TRUE(fs::exists(out / "maxima.json"));
  EXPECT_EQ(cli({"export-saliency", "--agent", m.agent.string(), "--scenario", "study14.json", "--dp", "15",
                 "--normtable", m.norm.string(), "--out-dir", out.string()}),
            kExitInvalid);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = XRL_CLI_PATH;
  EXPECT_EQ(std::system((bin + " --print-defaults > /dev/null").c_str()), 0);
  const int status = std::system((bin + " simulate > /dev/null 2>&1").c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), kExitInvalid);
  const auto& m = cli_materials();
  const int missing = std::system((bin + " simulate --agent /nope.bin --scenario study14.json --treatment Control "
                                         "--predictions /nope.txt --out " +
                                   (m.dir / "x.jsonl").string() + " > /dev/null 2>&1")
                                      .c_str());
  ASSERT_TRUE(WIFEXITED(missing));
  EXPECT_EQ(WEXITSTATUS(missing), kExitInvalid);
}
