#pragma once

// Flat key-value configuration (a single JSON object). Command-line flags
// are applied on top of it by the CLI.

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "socialgrid/eval.hpp"
#include "socialgrid/events.hpp"
#include "socialgrid/pipeline.hpp"

namespace socialgrid {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AppConfig {
  PipelineConfig pipeline;
  SynthParams synth;
  AdaptiveProtocol adaptive;
  std::size_t breakout_horizon = 0;  // intervals; 0 = 95th percentile of training lifetimes
  std::size_t breakout_max_start = 10;
  std::size_t search_budget = 0;     // epochs per grid-search cell, 0 = full
};

/// Keeps the model sub-configs in step with the shared settings.
inline void set_window(AppConfig& c, std::size_t h, std::size_t w) {
  c.pipeline.thread_model.window.h = c.pipeline.reply_model.window.h = h;
  c.pipeline.thread_model.window.w = c.pipeline.reply_model.window.w = w;
}

namespace detail {

template <typename T>
T config_value(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

inline std::size_t config_count(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  return j.get<std::size_t>();
}

}  // namespace detail

inline void apply_config_json(AppConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  auto& p = c.pipeline;
  auto both = [&](auto fn) {
    fn(p.thread_model);
    fn(p.reply_model);
  };
  for (const auto& [key, v] : j.items()) {
    using detail::config_count;
    using detail::config_value;
    if (key == "d") p.d = config_value<double>(v, key);
    else if (key == "t0") { p.t0 = config_value<double>(v, key); p.t0_from_data = false; }
    else if (key == "h") set_window(c, config_count(v, key), p.thread_model.window.w);
    else if (key == "w") set_window(c, p.thread_model.window.h, config_count(v, key));
    else if (key == "channels") {
      const auto set = parse_channel_set(config_value<std::string>(v, key));
      both([&](ModelConfig& m) { m.window.channels = set; });
    }
    else if (key == "n_filters") { const auto n = config_count(v, key); both([&](ModelConfig& m) { m.n_filters = n; }); }
    else if (key == "k") { const auto n = config_count(v, key); both([&](ModelConfig& m) { m.k = n; }); }
    else if (key == "n_blocks") { const auto n = config_count(v, key); both([&](ModelConfig& m) { m.n_blocks = n; }); }
    else if (key == "filter_shape") {
      const auto s = parse_filter_shape(config_value<std::string>(v, key));
      both([&](ModelConfig& m) { m.filter_shape = s; });
    }
    else if (key == "loss_mode") p.reply_model.loss_mode = parse_loss_mode(config_value<std::string>(v, key));
    else if (key == "lr") p.train.lr = config_value<double>(v, key);
    else if (key == "weight_decay") p.train.weight_decay = config_value<double>(v, key);
    else if (key == "epochs") p.train.epochs = config_count(v, key);
    else if (key == "batch_size") p.train.batch_size = config_count(v, key);
    else if (key == "seed") { p.seed = config_count(v, key); c.synth.seed = p.seed; c.adaptive.seed = p.seed; }
    else if (key == "train_fraction") p.train_fraction = config_value<double>(v, key);
    else if (key == "reply_lags") p.reply_lags = config_count(v, key);
    else if (key == "eval_intervals") p.eval_intervals = config_count(v, key);
    else if (key == "lambda_thread") c.synth.lambda_thread = config_value<double>(v, key);
    else if (key == "mu_reply") c.synth.mu_reply = config_value<double>(v, key);
    else if (key == "theta") c.synth.theta = config_value<double>(v, key);
    else if (key == "horizon") c.synth.horizon = config_value<double>(v, key);
    else if (key == "breakout_fraction") c.synth.breakout_fraction = config_value<double>(v, key);
    else if (key == "breakout_boost") c.synth.breakout_boost = config_value<double>(v, key);
    else if (key == "adaptive_starts") c.adaptive.n_starts = config_count(v, key);
    else if (key == "adaptive_threads") c.adaptive.n_threads = config_count(v, key);
    else if (key == "live_columns") c.adaptive.live_columns = config_count(v, key);
    else if (key == "breakout_horizon") c.breakout_horizon = config_count(v, key);
    else if (key == "breakout_max_start") c.breakout_max_start = config_count(v, key);
    else if (key == "search_budget") c.search_budget = config_count(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

inline AppConfig load_config_file(const std::string& path, AppConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + " does not parse: " + e.what());
  }
  apply_config_json(base, j);
  return base;
}

}  // namespace socialgrid
