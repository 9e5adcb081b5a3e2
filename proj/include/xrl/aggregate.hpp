#pragma once

// Per-DP prediction accuracy over closed session logs.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrl/error.hpp"
#include "xrl/io.hpp"
#include "xrl/study.hpp"

namespace xrl {

struct AccuracyCell {
  int dp = 0;
  Treatment treatment = Treatment::Control;
  std::int64_t n = 0;
  std::int64_t correct = 0;

  std::optional<double> accuracy() const {
    if (n == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(n);
  }
  /// Population standard deviation of the 0/1 outcomes over sqrt(n).
  std::optional<double> standard_error() const {
    const auto p = accuracy();
    if (!p) return std::nullopt;
    return std::sqrt(*p * (1.0 - *p)) / std::sqrt(static_cast<double>(n));
  }
};

struct AccuracyTable {
  std::string scenario_fingerprint;
  int dp_count = 0;
  /// Rows ordered by DP, then treatment in enum order.
  std::vector<AccuracyCell> cells;

  const AccuracyCell& at(int dp, Treatment t) const {
    return cells.at(static_cast<std::size_t>(dp - 1) * kNumTreatments + index_of(t));
  }
};

/// Aggregates the prediction records of every log. All logs must come from
/// the same scenario.
inline AccuracyTable aggregate(const std::vector<std::vector<nlohmann::json>>& logs) {
  AccuracyTable table;
  std::map<std::pair<int, std::size_t>, std::pair<std::int64_t, std::int64_t>> counts;
  bool seen = false;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const auto& log = logs[i];
    if (log.empty()) continue;
    const auto& head = log.front();
    if (head.value("type", "") != "session_created")
      throw ValidationError("log " + std::to_string(i + 1) + " does not start with session_created");
    const auto& p = head.at("payload");
    const std::string fp = p.at("scenario_fingerprint").get<std::string>();
    const int dps = p.at("dp_count").get<int>();
    if (!seen) {
      table.scenario_fingerprint = fp;
      table.dp_count = dps;
      seen = true;
    } else if (fp != table.scenario_fingerprint) {
      throw ValidationError("logs mix scenarios (" + table.scenario_fingerprint + " and " + fp + ")");
    }
    const Treatment t = parse_treatment(head.at("treatment").get<std::string>());
    for (const auto& e : log) {
      if (e.at("type").get<std::string>() != "prediction") continue;
      const auto& r = e.at("payload");
      const int dp = r.at("dp").get<int>();
      if (dp < 1 || dp > dps) throw ValidationError("prediction for DP" + std::to_string(dp) + " out of range");
      auto& [n, ok] = counts[{dp, index_of(t)}];
      ++n;
      ok += r.at("correct").get<bool>() ? 1 : 0;
    }
  }
  for (int dp = 1; dp <= table.dp_count; ++dp)
    for (Treatment t : kAllTreatments) {
      AccuracyCell c;
      c.dp = dp;
      c.treatment = t;
      if (auto it = counts.find({dp, index_of(t)}); it != counts.end()) {
        c.n = it->second.first;
        c.correct = it->second.second;
      }
      table.cells.push_back(c);
    }
  return table;
}

namespace detail {

inline std::string shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// dp,treatment,n,correct,accuracy,se; empty cells leave accuracy and se blank.
inline std::string to_csv(const AccuracyTable& t) {
  std::string out = "dp,treatment,n,correct,accuracy,se\n";
  for (const auto& c : t.cells) {
    out += std::to_string(c.dp) + "," + std::string(name_of(c.treatment)) + "," +
           std::to_string(c.n) + "," + std::to_string(c.correct) + ",";
    if (auto a = c.accuracy()) out += detail::shortest(*a);
    out += ",";
    if (auto se = c.standard_error()) out += detail::shortest(*se);
    out += "\n";
  }
  return out;
}

/// Reads every *.jsonl file of `dir`, in file-name order.
inline std::vector<std::vector<nlohmann::json>> read_log_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw NotFoundError("log directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<std::vector<nlohmann::json>> logs;
  for (const auto& f : files) {
    try {
      logs.push_back(parse_jsonl(read_file(f)));
    } catch (const ParseError& e) {
      throw ParseError(f.filename().string() + ": " + e.what());
    }
  }
  return logs;
}

}  // namespace xrl
