#pragma once

// Event-log ingestion (newline-delimited JSON records) and the seeded
// synthetic cascade generator.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "socialgrid/grid.hpp"
#include "socialgrid/random.hpp"

namespace socialgrid {

/// Malformed or unreadable event input.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class EventKind { Thread, Reply };

struct EventRecord {
  std::string thread_id;
  EventKind kind = EventKind::Thread;
  double ts = 0.0;
};

struct ParseResult {
  EventStream stream;
  std::size_t duplicates = 0;  // identical records dropped
};

/// Reads one record per line: {"thread_id": ..., "kind": "thread"|"reply", "ts": seconds}.
/// Blank lines are skipped and unknown fields ignored. Records may come in
/// any order.
inline ParseResult parse_events(std::istream& in) {
  struct Pending {
    std::string thread_id;
    double ts;
    std::size_t line;
  };
  std::map<std::string, std::pair<double, std::size_t>> threads;  // id -> (ts, line)
  std::vector<Pending> replies;
  std::set<std::tuple<std::string, int, double>> seen;
  ParseResult out;

  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(where + "malformed record (" + std::string(e.what()) + ")");
    }
    if (!j.is_object()) throw InputError(where + "record is not an object");
    if (!j.contains("thread_id") || !j["thread_id"].is_string())
      throw InputError(where + "missing string field thread_id");
    if (!j.contains("kind") || !j["kind"].is_string()) throw InputError(where + "missing string field kind");
    if (!j.contains("ts") || !j["ts"].is_number()) throw InputError(where + "missing numeric field ts");
    const std::string id = j["thread_id"].get<std::string>();
    const std::string kind = j["kind"].get<std::string>();
    const double ts = j["ts"].get<double>();
    if (!std::isfinite(ts)) throw InputError(where + "non-finite ts");
    if (kind != "thread" && kind != "reply")
      throw InputError(where + "kind must be \"thread\" or \"reply\", got \"" + kind + "\"");
    const bool is_thread = kind == "thread";
    if (!seen.emplace(id, is_thread ? 0 : 1, ts).second) {
      ++out.duplicates;
      continue;
    }
    if (is_thread) {
      auto [it, fresh] = threads.emplace(id, std::make_pair(ts, line_no));
      if (!fresh)
        throw InputError(where + "second thread record for thread_id " + id + " (first on line " +
                                 std::to_string(it->second.second) + ")");
    } else {
      replies.push_back({id, ts, line_no});
    }
  }

  std::map<std::string, std::vector<double>> by_thread;
  for (const auto& r : replies) {
    auto it = threads.find(r.thread_id);
    if (it == threads.end())
      throw InputError("line " + std::to_string(r.line) + ": reply for unknown thread_id " + r.thread_id);
    if (r.ts < it->second.first)
      throw InputError("line " + std::to_string(r.line) + ": reply of thread_id " + r.thread_id +
                               " is earlier than its thread");
    by_thread[r.thread_id].push_back(r.ts);
  }
  std::vector<ThreadCascade> cascades;
  for (const auto& [id, info] : threads) cascades.push_back({id, info.first, std::move(by_thread[id])});
  out.stream = make_event_stream(std::move(cascades));
  return out;
}

inline ParseResult parse_events_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open event file " + path);
  return parse_events(in);
}

/// Canonical serialization: cascades in stream order, each thread record
/// followed by its replies. Times are written with the shortest decimal
/// form that reads back to the same double.
inline void serialize_events(const EventStream& stream, std::ostream& out) {
  for (const auto& c : stream.cascades) {
    out << nlohmann::json{{"thread_id", c.thread_id}, {"kind", "thread"}, {"ts", c.thread_time}}.dump() << '\n';
    for (double t : c.reply_times)
      out << nlohmann::json{{"thread_id", c.thread_id}, {"kind", "reply"}, {"ts", t}}.dump() << '\n';
  }
}

inline void write_events_file(const EventStream& stream, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write event file " + path);
  serialize_events(stream, out);
  if (!out) throw std::runtime_error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

struct SynthParams {
  double lambda_thread = 1.0 / 600.0;  // threads per second
  double mu_reply = 0.05;              // initial reply intensity, replies per second
  double theta = 300.0;                // decay timescale, seconds
  double horizon = 120000.0;           // thread arrivals fall in [0, horizon)
  double breakout_fraction = 0.0;
  double breakout_boost = 4.0;
  std::uint64_t seed = 0;
};

inline void validate(const SynthParams& p) {
  if (!(p.lambda_thread > 0.0)) throw std::invalid_argument("synth: lambda_thread must be positive");
  if (!(p.mu_reply >= 0.0)) throw std::invalid_argument("synth: mu_reply must be non-negative");
  if (!(p.theta > 0.0)) throw std::invalid_argument("synth: theta must be positive");
  if (!(p.horizon > 0.0)) throw std::invalid_argument("synth: horizon must be positive");
  if (!(p.breakout_fraction >= 0.0 && p.breakout_fraction <= 1.0))
    throw std::invalid_argument("synth: breakout_fraction must lie in [0, 1]");
  if (!(p.breakout_boost > 1.0)) throw std::invalid_argument("synth: breakout_boost must exceed 1");
}

inline std::string synth_thread_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%06zu", index);
  return buf;
}

struct SynthCascadeInfo {
  bool breakout = false;
};

/// Homogeneous Poisson thread arrivals; per cascade, replies from the
/// intensity mu exp(-(t - T) / theta) by thinning. Since the intensity
/// only decreases, its value at the current candidate time bounds the rest.
/// Generation stops once the expected number of remaining replies drops
/// below 1e-6.
inline EventStream synth_generate(const SynthParams& p, std::vector<SynthCascadeInfo>* info = nullptr) {
  validate(p);
  Rng rng(p.seed);
  std::vector<double> thread_times;
  for (double t = rng.exponential(p.lambda_thread); t < p.horizon; t += rng.exponential(p.lambda_thread))
    thread_times.push_back(t);

  std::vector<ThreadCascade> cascades;
  if (info) info->clear();
  for (std::size_t j = 0; j < thread_times.size(); ++j) {
    const double T = thread_times[j];
    const bool breakout = p.breakout_fraction > 0.0 && rng.bernoulli(p.breakout_fraction);
    const double mu = breakout ? p.mu_reply * p.breakout_boost : p.mu_reply;
    ThreadCascade c{synth_thread_id(j), T, {}};
    if (mu > 0.0) {
      double s = T;
      while (true) {
        const double bound = mu * std::exp(-(s - T) / p.theta);
        if (bound * p.theta < 1e-6) break;
        s += rng.exponential(bound);
        const double lambda = mu * std::exp(-(s - T) / p.theta);
        if (rng.uniform() * bound < lambda) c.reply_times.push_back(s);
      }
    }
    cascades.push_back(std::move(c));
    if (info) info->push_back({breakout});
  }
  return make_event_stream(std::move(cascades));
}

}  // namespace socialgrid
