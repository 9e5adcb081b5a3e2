#pragma once

// Transport-independent HTTP routing for the study service. Sessions live in
// a store keyed by id; each session is mutated under its own mutex, the map
// under another.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "xrl/aggregate.hpp"
#include "xrl/error.hpp"
#include "xrl/io.hpp"
#include "xrl/scenario.hpp"
#include "xrl/study.hpp"

namespace xrl {

struct HttpRequest {
  std::string method;
  std::string target;  // path with optional ?query
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

inline int status_for(const std::exception& e) {
  if (const auto* x = dynamic_cast<const Error*>(&e)) {
    const std::string c = x->category();
    if (c == "not_found") return 404;
    if (c == "conflict") return 409;
    if (c == "gone") return 410;
    if (c == "method_not_allowed") return 405;
    if (c == "validation" || c == "parse" || c == "precondition" || c == "config") return 400;
  }
  return 500;
}

inline HttpResponse error_response(const std::exception& e) {
  const auto* x = dynamic_cast<const Error*>(&e);
  nlohmann::json body = {{"error", x ? x->category() : std::string("internal")}, {"message", e.what()}};
  return {status_for(e), "application/json", body.dump()};
}

inline std::string percent_decode(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '+') {
      out += ' ';
    } else if (s[i] == '%' && i + 2 < s.size()) {
      int v = 0;
      auto [p, ec] = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
      if (ec != std::errc() || p != s.data() + i + 3) throw ValidationError("bad percent escape in query");
      out += static_cast<char>(v);
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

struct ParsedTarget {
  std::vector<std::string> segments;
  std::map<std::string, std::string> query;
};

inline ParsedTarget parse_target(std::string_view target) {
  ParsedTarget t;
  const auto qpos = target.find('?');
  const std::string_view path = target.substr(0, qpos);
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    const std::size_t j = path.find('/', i);
    const std::size_t end = j == std::string_view::npos ? path.size() : j;
    if (end > i) t.segments.push_back(percent_decode(path.substr(i, end - i)));
    i = end;
  }
  if (qpos != std::string_view::npos) {
    std::string_view q = target.substr(qpos + 1);
    while (!q.empty()) {
      const auto amp = q.find('&');
      const std::string_view kv = q.substr(0, amp);
      const auto eq = kv.find('=');
      t.query[percent_decode(kv.substr(0, eq))] =
          eq == std::string_view::npos ? std::string() : percent_decode(kv.substr(eq + 1));
      if (amp == std::string_view::npos) break;
      q.remove_prefix(amp + 1);
    }
  }
  return t;
}

/// `rel` resolved under `root`; throws when it escapes it.
inline std::filesystem::path contained_path(const std::filesystem::path& root, const std::string& rel) {
  namespace fs = std::filesystem;
  const fs::path base = fs::weakly_canonical(root);
  const fs::path full = fs::weakly_canonical(base / fs::path(rel).relative_path());
  auto mismatch = std::mismatch(base.begin(), base.end(), full.begin(), full.end());
  if (mismatch.first != base.end()) throw NotFoundError("path outside the served directory: " + rel);
  return full;
}

inline std::string random_session_id() {
  static std::mutex m;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(m);
  static constexpr char hex[] = "0123456789abcdef";
  std::string id;
  for (int part = 0; part < 2; ++part) {
    std::uint64_t v = rng();
    for (int i = 0; i < 16; ++i, v >>= 4) id += hex[v & 0xf];
  }
  return id;
}

struct ServiceConfig {
  std::filesystem::path scenario_dir;
  /// Session logs are appended here; empty disables persistence.
  std::filesystem::path log_dir;
  /// Static assets for GET requests outside the API; empty disables.
  std::filesystem::path static_dir;
  SessionConfig session;
};

class Service {
public:
  Service(ServiceConfig config, std::shared_ptr<const DecomposedAgent> agent,
          std::shared_ptr<const NormTable> norm_table, Clock clock = system_clock_ms(),
          std::function<std::string()> new_id = random_session_id)
      : config_(std::move(config)),
        agent_(std::move(agent)),
        checkpoint_fp_(checkpoint_fingerprint(*agent_)),
        norm_table_(std::move(norm_table)),
        clock_(std::move(clock)),
        new_id_(std::move(new_id)) {
    if (!config_.log_dir.empty()) std::filesystem::create_directories(config_.log_dir);
  }

  HttpResponse handle(const HttpRequest& req) {
    try {
      return route(req);
    } catch (const nlohmann::json::exception& e) {
      return error_response(ValidationError(std::string("bad request body: ") + e.what()));
    } catch (const std::exception& e) {
      return error_response(e);
    }
  }

  /// Rebuilds sessions from the log directory. Returns how many were restored;
  /// logs that do not replay against the current materials are skipped.
  std::size_t restore() {
    if (config_.log_dir.empty()) return 0;
    std::size_t n = 0;
    for (const auto& entry : std::filesystem::directory_iterator(config_.log_dir)) {
      if (entry.path().extension() != ".jsonl") continue;
      try {
        const auto events = parse_jsonl(read_file(entry.path()));
        if (events.empty()) continue;
        const std::string name = events.front().at("payload").at("scenario").get<std::string>();
        auto sess = std::make_shared<Entry>(
            Session::replay(events, materials(name), config_.session, clock_));
        sess->session.set_listener(log_writer(sess->session.id()));
        std::unique_lock lock(map_mutex_);
        sessions_.emplace(sess->session.id(), std::move(sess));
        ++n;
      } catch (const std::exception&) {
        continue;
      }
    }
    return n;
  }

  /// Applies deadlines and returns the session status; nullopt if unknown.
  std::optional<nlohmann::json> poll(const std::string& id, bool* phase_changed = nullptr) {
    auto e = find(id);
    if (!e) return std::nullopt;
    std::lock_guard lock(e->m);
    const bool changed = e->session.poll();
    if (phase_changed) *phase_changed = changed;
    return e->session.status();
  }

  std::size_t session_count() const {
    std::shared_lock lock(map_mutex_);
    return sessions_.size();
  }

private:
  struct Entry {
    explicit Entry(Session s) : session(std::move(s)) {}
    std::mutex m;
    Session session;
  };

  HttpResponse route(const HttpRequest& req) {
    const ParsedTarget t = parse_target(req.target);
    const auto& seg = t.segments;
    const std::string& m = req.method;

    if (!seg.empty() && seg[0] == "sessions") {
      if (seg.size() == 1) {
        require_method(m, "POST");
        return create(req.body);
      }
      const std::string& id = seg[1];
      if (seg.size() == 3 && seg[2] == "view") {
        require_method(m, "GET");
        return with(id, [](Session& s) { return json_ok(s.view()); });
      }
      if (seg.size() == 3 && seg[2] == "prediction") {
        require_method(m, "POST");
        const auto body = nlohmann::json::parse(req.body);
        const std::string quadrant = body.at("quadrant").get<std::string>();
        const std::string rationale = body.value("rationale", std::string());
        std::optional<std::int64_t> client;
        if (auto it = body.find("client_elapsed_ms"); it != body.end() && !it->is_null())
          client = it->get<std::int64_t>();
        return with(id, [&](Session& s) { return json_ok(s.submit(quadrant, rationale, client)); });
      }
      if (seg.size() == 3 && seg[2] == "advance") {
        require_method(m, "POST");
        return with(id, [](Session& s) { return json_ok(s.advance()); });
      }
      if (seg.size() == 3 && seg[2] == "log") {
        require_method(m, "GET");
        return with(id, [](Session& s) {
          return HttpResponse{200, "application/x-ndjson", s.log_jsonl()};
        });
      }
      throw NotFoundError("no route for " + req.target);
    }
    if (seg.size() == 1 && seg[0] == "aggregate") {
      require_method(m, "GET");
      if (config_.log_dir.empty()) throw NotFoundError("no log directory configured");
      auto it = t.query.find("dir");
      const auto dir = contained_path(config_.log_dir, it == t.query.end() ? "." : it->second);
      return {200, "text/csv", to_csv(aggregate(read_log_dir(dir)))};
    }
    if (m == "GET" && !config_.static_dir.empty()) return serve_static(seg);
    throw NotFoundError("no route for " + req.target);
  }

  static void require_method(const std::string& got, const char* want) {
    if (got != want) throw MethodError("method " + got + " not allowed, use " + want);
  }

  static HttpResponse json_ok(const nlohmann::json& j, int status = 200) {
    return {status, "application/json", j.dump()};
  }

  StudyMaterials materials(const std::string& scenario_name) {
    if (scenario_name.empty() || scenario_name.find('/') != std::string::npos ||
        scenario_name.find("..") != std::string::npos)
      throw NotFoundError("unknown scenario '" + scenario_name + "'");
    std::shared_ptr<const Scenario> sc;
    {
      std::lock_guard lock(scenario_mutex_);
      auto it = scenarios_.find(scenario_name);
      if (it == scenarios_.end()) {
        const auto path = config_.scenario_dir / (scenario_name + ".json");
        if (!std::filesystem::exists(path)) throw NotFoundError("unknown scenario '" + scenario_name + "'");
        it = scenarios_.emplace(scenario_name, std::make_shared<const Scenario>(load_scenario(path))).first;
      }
      sc = it->second;
    }
    return {sc, scenario_name, agent_, checkpoint_fp_, norm_table_};
  }

  HttpResponse create(const std::string& body_text) {
    const auto body = nlohmann::json::parse(body_text);
    const Treatment treatment = parse_treatment(body.at("treatment").get<std::string>());
    StudyMaterials mat = materials(body.at("scenario").get<std::string>());
    std::string id = new_id_();
    auto entry = std::make_shared<Entry>(
        Session::create(id, treatment, std::move(mat), config_.session, clock_, log_writer(id)));
    {
      std::unique_lock lock(map_mutex_);
      if (!sessions_.emplace(id, entry).second) throw ConflictError("session id collision");
    }
    return json_ok({{"id", id}}, 201);
  }

  Session::Listener log_writer(const std::string& id) const {
    if (config_.log_dir.empty()) return {};
    const auto path = config_.log_dir / (id + ".jsonl");
    return [path](const nlohmann::json& e) {
      std::ofstream out(path, std::ios::app | std::ios::binary);
      out << e.dump() << '\n';
      out.flush();
      if (!out) throw IoError("failed to append to " + path.string());
    };
  }

  std::shared_ptr<Entry> find(const std::string& id) const {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  template <typename F>
  HttpResponse with(const std::string& id, F&& f) {
    auto e = find(id);
    if (!e) throw NotFoundError("unknown session " + id);
    std::lock_guard lock(e->m);
    return f(e->session);
  }

  HttpResponse serve_static(const std::vector<std::string>& seg) {
    std::string rel;
    for (const auto& s : seg) rel += (rel.empty() ? "" : "/") + s;
    if (rel.empty()) rel = "index.html";
    const auto path = contained_path(config_.static_dir, rel);
    if (!std::filesystem::is_regular_file(path)) throw NotFoundError("no such file: " + rel);
    return {200, mime_type(path), read_file(path)};
  }

  static std::string mime_type(const std::filesystem::path& p) {
    const std::string ext = p.extension().string();
    if (ext == ".html") return "text/html; charset=utf-8";
    if (ext == ".js") return "text/javascript; charset=utf-8";
    if (ext == ".css") return "text/css; charset=utf-8";
    if (ext == ".json") return "application/json";
    if (ext == ".png") return "image/png";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
  }

  ServiceConfig config_;
  std::shared_ptr<const DecomposedAgent> agent_;
  std::string checkpoint_fp_;
  std::shared_ptr<const NormTable> norm_table_;
  Clock clock_;
  std::function<std::string()> new_id_;

  mutable std::shared_mutex map_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Entry>> sessions_;
  std::mutex scenario_mutex_;
  std::map<std::string, std::shared_ptr<const Scenario>> scenarios_;
};

}  // namespace xrl
