#pragma once

// Command-line front end. Every subcommand reads an optional flat JSON
// config (--config) and then applies its flags, so flags win. Failures
// print one line "error\t<code>\t<message>" to the error stream and return
// a nonzero status.

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "socialgrid/checkpoint.hpp"
#include "socialgrid/config.hpp"
#include "socialgrid/eval.hpp"
#include "socialgrid/events.hpp"
#include "socialgrid/forecast.hpp"
#include "socialgrid/grid_io.hpp"
#include "socialgrid/models.hpp"
#include "socialgrid/pipeline.hpp"

namespace socialgrid {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitConfig = 3, kExitInput = 4, kExitRuntime = 5 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Cli {
 public:
  Cli(std::ostream& out, std::ostream& err) : out_(out), err_(err) { build(); }

  int run(int argc, const char* const* argv) {
    try {
      app_.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out_ << app_.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out_ << app_.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      return fail(kExitUsage, "usage", e.what());
    }
    try {
      dispatch();
      return kExitOk;
    } catch (const UsageError& e) {
      return fail(kExitUsage, "usage", e.what());
    } catch (const ConfigError& e) {
      return fail(kExitConfig, "config", e.what());
    } catch (const InputError& e) {
      return fail(kExitInput, "input", e.what());
    } catch (const CheckpointError& e) {
      return fail(kExitInput, "checkpoint", e.what());
    } catch (const std::invalid_argument& e) {
      return fail(kExitInput, "invalid", e.what());
    } catch (const std::out_of_range& e) {
      return fail(kExitInput, "range", e.what());
    } catch (const std::exception& e) {
      return fail(kExitRuntime, "runtime", e.what());
    }
  }

 private:
  struct Opts {
    std::string config, in, out, checkpoint, thread_ckpt, reply_ckpt;
    std::string channels, loss_mode, filter_shape, kind = "reply", space = "small", candidates = "default";
    std::vector<double> d_values;
    double d = 300.0, t0 = 0.0;
    std::uint64_t seed = 0;
    std::size_t epochs = 0, filters = 0, blocks = 0, k = 0, h = 0, w = 0, budget = 0;
    double lambda_thread = 0, mu_reply = 0, theta = 0, horizon = 0, breakout_fraction = 0, breakout_boost = 0;
  };

  int fail(int code, const char* tag, const std::string& message) {
    std::string flat = message;
    for (char& c : flat)
      if (c == '\n' || c == '\t') c = ' ';
    err_ << "error\t" << tag << '\t' << flat << '\n';
    return code;
  }

  void build() {
    app_.require_subcommand(1, 1);
    app_.set_help_all_flag("--help-all", "Show help for every subcommand");

    auto* ingest = add("ingest", "Parse an event log and write it back in canonical order");
    input(ingest, true);
    ingest->add_option("--out", o_.out, "Canonical event log to write");

    auto* synth = add("synth", "Generate a synthetic event log");
    synth->add_option("--out", o_.out, "Event log to write (stdout if omitted)");
    synth->add_option("--lambda-thread", o_.lambda_thread, "Thread arrival rate, per second");
    synth->add_option("--mu-reply", o_.mu_reply, "Initial reply intensity, per second");
    synth->add_option("--theta", o_.theta, "Reply decay timescale, seconds");
    synth->add_option("--horizon", o_.horizon, "Span of thread arrivals, seconds");
    synth->add_option("--breakout-fraction", o_.breakout_fraction, "Share of boosted cascades");
    synth->add_option("--breakout-boost", o_.breakout_boost, "Intensity multiplier of boosted cascades");

    auto* grid = add("grid", "Build the grid of an event log");
    input(grid, true);
    grid->add_option("--out", o_.out, "Binary grid file to write");

    for (const char* name : {"train-thread", "train-reply"}) {
      auto* t = add(name, std::string("Train the ") + (name[6] == 't' ? "thread-gap" : "reply-count") +
                              " model on the training columns");
      input(t, true);
      model_flags(t);
      t->add_option("--checkpoint", o_.checkpoint, "Checkpoint to write")->required();
      t->add_option("--out", o_.out, "Loss history CSV (stdout if omitted)");
    }

    auto* search = add("grid-search", "Grid search over filters, filter size and depth");
    input(search, true);
    model_flags(search);
    search->add_option("--kind", o_.kind, "thread or reply")->check(CLI::IsMember({"thread", "reply"}));
    search->add_option("--space", o_.space, "small or full")->check(CLI::IsMember({"small", "full"}));
    search->add_option("--budget", o_.budget, "Epochs per cell (0 = the configured epochs)");
    search->add_option("--out", o_.out, "Result CSV (stdout if omitted)");

    auto* predict = add("predict", "One-step predictions of a checkpoint on the test columns");
    input(predict, true);
    predict->add_option("--checkpoint", o_.checkpoint, "Trained model")->required();
    predict->add_option("--out", o_.out, "Predictions CSV (stdout if omitted)");

    auto* adaptive = add("adaptive", "Adaptive roll-out evaluation from random start points");
    input(adaptive, true);
    adaptive->add_option("--thread-checkpoint", o_.thread_ckpt, "Trained thread model")->required();
    adaptive->add_option("--reply-checkpoint", o_.reply_ckpt, "Trained reply model")->required();
    adaptive->add_option("--out", o_.out, "Per-step CSV (stdout if omitted)");

    auto* breakout = add("breakout", "Breakout-cascade classification rate per start duration");
    input(breakout, true);
    breakout->add_option("--reply-checkpoint,--checkpoint", o_.reply_ckpt, "Trained reply model")->required();
    breakout->add_option("--out", o_.out, "Curve CSV (stdout if omitted)");

    auto* evaluate = add("evaluate", "Test-set MAE/RMSE of both models and the baselines");
    input(evaluate, true);
    evaluate->add_option("--thread-checkpoint", o_.thread_ckpt, "Trained thread model")->required();
    evaluate->add_option("--reply-checkpoint", o_.reply_ckpt, "Trained reply model")->required();
    evaluate->add_option("--out", o_.out, "Report CSV (stdout if omitted)");

    auto* sweep = add("sweep-d", "Retrain and evaluate for several interval lengths");
    input(sweep, true);
    model_flags(sweep);
    sweep->add_option("--d-values", o_.d_values, "Candidate interval lengths, seconds")->delimiter(',');
    sweep->add_option("--candidates", o_.candidates, "Preset candidate set: default or nfl")
        ->check(CLI::IsMember({"default", "nfl"}));
    sweep->add_option("--out", o_.out, "Sweep CSV (stdout if omitted)");
  }

  CLI::App* add(const std::string& name, const std::string& desc) {
    auto* sub = app_.add_subcommand(name, desc);
    sub->add_option("--config", o_.config, "Flat JSON config file");
    sub->add_option("--seed", o_.seed, "Seed for all randomness");
    return sub;
  }

  void input(CLI::App* sub, bool required) {
    auto* in = sub->add_option("--in", o_.in, "Event log (newline-delimited JSON records)");
    if (required) in->required();
    sub->add_option("--d", o_.d, "Interval length, seconds");
    sub->add_option("--t0", o_.t0, "Grid origin, seconds (default: first thread time)");
    sub->add_option("--channels", o_.channels, "Feature channels: S, M or full")
        ->check(CLI::IsMember({"S", "M", "full"}));
    sub->add_option("--loss-mode", o_.loss_mode, "Reply loss: corner or full")->check(CLI::IsMember({"corner", "full"}));
    sub->add_option("--filter-shape", o_.filter_shape, "KxK or Kx1")->check(CLI::IsMember({"KxK", "Kx1"}));
  }

  void model_flags(CLI::App* sub) {
    sub->add_option("--epochs", o_.epochs, "Training epochs");
    sub->add_option("--filters", o_.filters, "Filters per block");
    sub->add_option("--blocks", o_.blocks, "Temporal blocks");
    sub->add_option("--k", o_.k, "Filter size");
    sub->add_option("--window-h", o_.h, "Window height");
    sub->add_option("--window-w", o_.w, "Window width");
  }

  bool given(const char* flag) const {
    const auto* opt = active_->get_option_no_throw(flag);
    return opt != nullptr && opt->count() > 0;
  }

  AppConfig resolve() const {
    AppConfig c = o_.config.empty() ? AppConfig{} : load_config_file(o_.config);
    nlohmann::json flags = nlohmann::json::object();
    if (given("--seed")) flags["seed"] = o_.seed;
    if (given("--d")) flags["d"] = o_.d;
    if (given("--t0")) flags["t0"] = o_.t0;
    if (given("--channels")) flags["channels"] = o_.channels;
    if (given("--loss-mode")) flags["loss_mode"] = o_.loss_mode;
    if (given("--filter-shape")) flags["filter_shape"] = o_.filter_shape;
    if (given("--epochs")) flags["epochs"] = o_.epochs;
    if (given("--filters")) flags["n_filters"] = o_.filters;
    if (given("--blocks")) flags["n_blocks"] = o_.blocks;
    if (given("--k")) flags["k"] = o_.k;
    if (given("--window-h")) flags["h"] = o_.h;
    if (given("--window-w")) flags["w"] = o_.w;
    if (given("--lambda-thread")) flags["lambda_thread"] = o_.lambda_thread;
    if (given("--mu-reply")) flags["mu_reply"] = o_.mu_reply;
    if (given("--theta")) flags["theta"] = o_.theta;
    if (given("--horizon")) flags["horizon"] = o_.horizon;
    if (given("--breakout-fraction")) flags["breakout_fraction"] = o_.breakout_fraction;
    if (given("--breakout-boost")) flags["breakout_boost"] = o_.breakout_boost;
    if (given("--budget")) flags["search_budget"] = o_.budget;
    apply_config_json(c, flags);
    return c;
  }

  // Writes to --out if given, otherwise to the output stream.
  template <typename Fn>
  void emit(Fn&& write) {
    if (o_.out.empty()) {
      write(out_);
      return;
    }
    std::ofstream f(o_.out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + o_.out);
    write(f);
    if (!f) throw std::runtime_error("write failed for " + o_.out);
  }

  struct Loaded {
    EventStream stream;
    Grid grid;
    std::size_t split = 0;
  };

  Loaded load_input(const AppConfig& c) const {
    Loaded l;
    l.stream = parse_events_file(o_.in).stream;
    if (l.stream.empty()) throw std::invalid_argument("event log " + o_.in + " holds no threads");
    l.grid = grid_for(l.stream, c.pipeline.d, grid_origin(l.stream, c.pipeline));
    l.split = split_column(l.grid, c.pipeline.train_fraction);
    return l;
  }

  void dispatch() {
    for (auto* sub : app_.get_subcommands()) active_ = sub;
    const std::string name = active_->get_name();
    const AppConfig c = resolve();
    if (name == "ingest") return ingest();
    if (name == "synth") return synth(c);
    if (name == "grid") return grid(c);
    if (name == "train-thread") return train_model(c, ModelKind::Thread);
    if (name == "train-reply") return train_model(c, ModelKind::Reply);
    if (name == "grid-search") return search(c);
    if (name == "predict") return predict(c);
    if (name == "adaptive") return adaptive(c);
    if (name == "breakout") return breakout(c);
    if (name == "evaluate") return evaluate(c);
    if (name == "sweep-d") return sweep(c);
    throw UsageError("unknown subcommand " + name);
  }

  void ingest() {
    const auto parsed = parse_events_file(o_.in);
    std::size_t replies = 0;
    for (const auto& cas : parsed.stream.cascades) replies += cas.reply_times.size();
    if (!o_.out.empty()) write_events_file(parsed.stream, o_.out);
    out_ << "cascades\t" << parsed.stream.size() << "\nreplies\t" << replies << "\nduplicates\t" << parsed.duplicates
         << '\n';
  }

  void synth(const AppConfig& c) {
    const auto stream = synth_generate(c.synth);
    emit([&](std::ostream& o) { serialize_events(stream, o); });
  }

  void grid(const AppConfig& c) {
    const auto l = load_input(c);
    if (!o_.out.empty()) save_grid(l.grid, o_.out);
    out_ << "digest\t" << grid_digest(l.grid) << "\nrows\t" << l.grid.rows() << "\ncols\t" << l.grid.cols()
         << "\ndropped\t" << l.grid.dropped_events << '\n';
  }

  void train_model(const AppConfig& c, ModelKind kind) {
    const auto l = load_input(c);
    const auto& p = c.pipeline;
    TrainResult result;
    TrainingMetadata meta;
    if (kind == ModelKind::Thread) {
      const TrainConfig tc = thread_train_config(p);
      auto t = fit_thread(l.grid, 0, l.split, p.thread_model, tc);
      result = t.result;
      meta = {tc.seed, tc.epochs, result.initial_loss, result.loss_history};
      save_checkpoint(t.model, o_.checkpoint, meta);
    } else {
      const TrainConfig tc = reply_train_config(p);
      auto t = fit_reply(l.grid, 0, l.split, p.reply_lags, p.reply_model, tc);
      result = t.result;
      meta = {tc.seed, tc.epochs, result.initial_loss, result.loss_history};
      save_checkpoint(t.model, o_.checkpoint, meta);
    }
    emit([&](std::ostream& o) {
      o << "epoch,loss\n0," << format_number(result.initial_loss) << '\n';
      for (std::size_t e = 0; e < result.loss_history.size(); ++e)
        o << e + 1 << ',' << format_number(result.loss_history[e]) << '\n';
    });
  }

  void search(const AppConfig& c) {
    const auto l = load_input(c);
    const auto& p = c.pipeline;
    // validation = the last fifth of the training columns
    const std::size_t val_begin = std::max<std::size_t>(1, l.split - l.split / 5);
    const bool thread = o_.kind == "thread";
    const ModelConfig& base = thread ? p.thread_model : p.reply_model;
    std::vector<SearchCandidate> space;
    if (o_.space == "full") {
      space = default_search_space(base, p.train);
    } else {
      for (std::size_t f : {8, 16})
        for (std::size_t k : {2, 3})
          for (std::size_t b : {1, 2}) {
            SearchCandidate sc{base, p.train};
            sc.model.n_filters = f;
            sc.model.k = k;
            sc.model.n_blocks = b;
            space.push_back(sc);
          }
    }
    SearchResult r;
    if (thread) {
      r = grid_search<ThreadArrivalModel>(space, thread_segments(l.grid, base.window, 0, val_begin),
                                          thread_segments(l.grid, base.window, val_begin, l.split), c.search_budget,
                                          p.seed);
    } else {
      r = grid_search<ReplyCountModel>(space, reply_segments(l.grid, base.window, 0, val_begin, p.reply_lags),
                                       reply_segments(l.grid, base.window, val_begin, l.split, p.reply_lags),
                                       c.search_budget, p.seed);
    }
    emit([&](std::ostream& o) {
      o << "index,n_filters,k,n_blocks,val_loss,selected\n";
      for (std::size_t i = 0; i < space.size(); ++i)
        o << i << ',' << space[i].model.n_filters << ',' << space[i].model.k << ',' << space[i].model.n_blocks << ','
          << format_number(r.val_scores[i]) << ',' << (i == r.best_index ? 1 : 0) << '\n';
    });
  }

  static void write_records(std::ostream& o, const std::vector<PredictionRecord>& recs) {
    o << "column,row,predicted,truth\n";
    for (const auto& r : recs)
      o << r.column << ',' << r.row << ',' << format_number(r.predicted) << ',' << format_number(r.truth) << '\n';
  }

  void predict(const AppConfig& c) {
    const auto l = load_input(c);
    const auto data = decode_checkpoint(read_file_bytes(o_.checkpoint));
    std::vector<PredictionRecord> recs;
    if (checkpoint_kind(data) == ModelKind::Thread) {
      const auto m = model_from_checkpoint<ThreadArrivalModel<float>>(data);
      evaluate_thread_arrival(m.model, l.grid, thread_eval_columns(l.grid, l.split, l.grid.cols()), &recs);
    } else {
      const auto m = model_from_checkpoint<ReplyCountModel<float>>(data);
      const std::size_t n = c.pipeline.eval_intervals;
      evaluate_reply_counts(m.model, l.grid, reply_eval_columns(l.grid, l.split, l.grid.cols(), n), n, &recs);
    }
    emit([&](std::ostream& o) { write_records(o, recs); });
  }

  void adaptive(const AppConfig& c) {
    const auto l = load_input(c);
    const auto thread = load_checkpoint<ThreadArrivalModel<float>>(o_.thread_ckpt);
    const auto reply = load_checkpoint<ReplyCountModel<float>>(o_.reply_ckpt);
    AdaptiveProtocol proto = c.adaptive;
    proto.col_begin = l.split;
    proto.seed = c.pipeline.seed;
    const auto r = evaluate_adaptive(thread.model, reply.model, l.grid, proto);
    emit([&](std::ostream& o) { write_adaptive_csv(o, r); });
  }

  void breakout(const AppConfig& c) {
    const auto l = load_input(c);
    const auto reply = load_checkpoint<ReplyCountModel<float>>(o_.reply_ckpt);
    const std::size_t max_start = std::max<std::size_t>(1, c.breakout_max_start);
    const auto data = breakout_dataset(l.stream, l.grid, l.split, max_start, c.breakout_horizon);
    std::vector<std::size_t> durations;
    for (std::size_t s = 1; s <= max_start; ++s) durations.push_back(s);
    const auto with_model = breakout_precision_curve(data, &reply.model, durations);
    const auto prefix_only = breakout_precision_curve(data, nullptr, durations);
    emit([&](std::ostream& o) {
      o << "start_intervals,start_seconds,accuracy,precision,recall,n,prefix_only_accuracy\n";
      for (std::size_t i = 0; i < durations.size(); ++i) {
        const auto& p = with_model[i];
        o << p.start_intervals << ',' << format_number(p.start_duration) << ',' << format_number(p.accuracy) << ','
          << format_number(p.precision) << ',' << format_number(p.recall) << ',' << p.n << ','
          << format_number(prefix_only[i].accuracy) << '\n';
      }
    });
  }

  void evaluate(const AppConfig& c) {
    const auto l = load_input(c);
    const auto thread = load_checkpoint<ThreadArrivalModel<float>>(o_.thread_ckpt);
    const auto reply = load_checkpoint<ReplyCountModel<float>>(o_.reply_ckpt);
    const auto& p = c.pipeline;
    const auto t_cols = thread_eval_columns(l.grid, l.split, l.grid.cols());
    const auto r_cols = reply_eval_columns(l.grid, l.split, l.grid.cols(), p.eval_intervals);
    std::vector<LabeledReport> reports{
        {"model", evaluate_thread_arrival(thread.model, l.grid, t_cols)},
        {"HISTORICAL_MEAN", evaluate_thread_arrival(mean_gap_baseline(l.grid, l.split), l.grid, t_cols)},
        {"PERSISTENCE", evaluate_thread_arrival(PersistenceGapPredictor(l.grid), l.grid, t_cols)},
        {"model", evaluate_reply_counts(reply.model, l.grid, r_cols, p.eval_intervals)},
        {"HISTORICAL_MEAN", evaluate_reply_counts(mean_reply_baseline(l.grid, l.split, p.eval_intervals), l.grid,
                                                  r_cols, p.eval_intervals)},
        {"PERSISTENCE", evaluate_reply_counts(PersistenceReplyPredictor(), l.grid, r_cols, p.eval_intervals)}};
    const std::string digest = p.digest();
    for (auto& r : reports) r.report.config_digest = digest;
    emit([&](std::ostream& o) { write_report_csv(o, reports); });
  }

  void sweep(const AppConfig& c) {
    const auto stream = parse_events_file(o_.in).stream;
    std::vector<double> d_values = o_.d_values;
    if (d_values.empty()) d_values = o_.candidates == "nfl" ? nfl_sweep_candidates() : default_sweep_candidates();
    const auto r = sweep_interval_length(stream, d_values, c.pipeline);
    emit([&](std::ostream& o) { write_sweep_csv(o, r); });
  }

  std::ostream& out_;
  std::ostream& err_;
  CLI::App app_{"socialgrid: thread and reply forecasting on event-stream grids", "socialgrid"};
  Opts o_;
  CLI::App* active_ = nullptr;
};

inline int cli_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  Cli cli(out, err);
  return cli.run(argc, argv);
}

}  // namespace socialgrid
