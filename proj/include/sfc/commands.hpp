#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "auctionsim.hpp"
#include "config.hpp"
#include "events.hpp"
#include "generator.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "trainer.hpp"

#ifndef SFC_BUILD_ID
#define SFC_BUILD_ID "unknown"
#endif

namespace sfc {

namespace fs = std::filesystem;

inline constexpr const char* kBuildId = SFC_BUILD_ID;

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides `seed` in the config
  unsigned threads = 1;
};

// Collects what a run read and wrote; serialized once at the end.
class RunManifest {
 public:
  explicit RunManifest(std::string subcommand)
      : subcommand_(std::move(subcommand)), started_(now_iso()) {}

  void set_config(const KeyValueConfig& kv) {
    for (const auto& [k, v] : kv.entries()) config_[k] = v;
  }
  void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }
  void input(const fs::path& p) { inputs_.push_back(p.string()); }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }
  void seed(std::uint64_t s) { seed_ = s; }

  void write(const fs::path& path) const {
    nlohmann::ordered_json j;
    j["subcommand"] = subcommand_;
    j["build_id"] = kBuildId;
    if (seed_) j["seed"] = *seed_;
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    for (const auto& [k, v] : extra_) j[k] = v;
    j["started_at"] = started_;
    j["finished_at"] = now_iso();
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
  }

 private:
  static std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::string subcommand_;
  std::string started_;
  std::map<std::string, std::string> config_;
  std::map<std::string, nlohmann::json> extra_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::optional<std::uint64_t> seed_;
};

namespace detail {

inline KeyValueConfig load_config(const fs::path& path, const RunOptions& opt) {
  if (!fs::exists(path)) throw ConfigError("config '" + path.string() + "' does not exist");
  auto kv = KeyValueConfig::load(path);
  if (opt.seed) kv.set("seed", std::to_string(*opt.seed));
  return kv;
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

inline EventLog load_events(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  auto log = read_event_log(in);
  if (log.events.empty()) throw Error("event log '" + path.string() + "' has no events");
  return log;
}

inline bool declares_schema(const KeyValueConfig& kv) {
  for (const auto& [k, v] : kv.entries())
    if (k.rfind("schema.", 0) == 0) return true;
  return false;
}

inline void check_schema(const FeatureSchema& expected, const FeatureSchema& actual, const std::string& what) {
  if (expected == actual) return;
  throw SchemaError(what + ": " + expected.mismatch(actual));
}

inline fs::path sibling(const fs::path& p, const std::string& suffix) { return fs::path(p.string() + suffix); }

inline std::uint64_t run_seed(const KeyValueConfig& kv) {
  return static_cast<std::uint64_t>(kv.get_int("seed", 1));
}

// sweep.<train key> = v1,v2,... expands to the cartesian grid.
inline std::vector<HyperParams> sweep_grid(const KeyValueConfig& kv) {
  const auto axes = kv.with_prefix("sweep");
  std::vector<KeyValueConfig> grid{kv};
  for (const auto& [key, values] : axes) {
    std::vector<KeyValueConfig> next;
    for (const auto& g : grid)
      for (const auto& v : kv.get_list("sweep." + key)) {
        auto c = g;
        c.set(key, v);
        next.push_back(std::move(c));
      }
    grid = std::move(next);
  }
  std::vector<HyperParams> out;
  for (const auto& g : grid) out.push_back(HyperParams::from_config(g));
  return out;
}

}  // namespace detail

// generate: synthetic event log plus `<out>.manifest.json`.
inline void cmd_generate(const fs::path& config_path, const fs::path& out_path, const RunOptions& opt = {}) {
  RunManifest manifest("generate");
  const auto kv = detail::load_config(config_path, opt);
  const auto gen = generator_config_from(kv);
  gen.validate();
  manifest.set_config(kv);
  manifest.seed(gen.seed);
  manifest.input(config_path);

  auto out = detail::open_out(out_path);
  out << gen.schema.header_line() << '\n';
  std::uint64_t n = 0;
  generate_stream(gen, [&](const ImpressionEvent& e) {
    out << write_event_line(e, gen.schema) << '\n';
    ++n;
  });
  out.close();
  if (!out) throw Error("failed writing '" + out_path.string() + "'");
  manifest.output(out_path);
  manifest.set("events", n);
  manifest.write(detail::sibling(out_path, ".manifest.json"));
}

struct TrainOptions {
  bool sfc = true;
  std::optional<fs::path> progress;  // default: <out>.progress.csv
};

// train: model snapshot, progress CSV, and with `sweep.*` keys a ranked
// `<out>.sweep.csv` (the best configuration is the one saved).
inline TrainReport cmd_train(const fs::path& config_path, const fs::path& events_path, const fs::path& out_path,
                             const TrainOptions& topt, const RunOptions& opt = {}) {
  RunManifest manifest("train");
  const auto kv = detail::load_config(config_path, opt);
  auto hp = HyperParams::from_config(kv);
  hp.validate();
  const auto log = detail::load_events(events_path);
  if (detail::declares_schema(kv)) detail::check_schema(schema_from_config(kv), log.schema, "config vs event log");
  manifest.set_config(kv);
  manifest.seed(detail::run_seed(kv));
  manifest.input(config_path);
  manifest.input(events_path);
  manifest.set("sfc", topt.sfc);

  if (!kv.with_prefix("sweep").empty()) {
    const auto grid = detail::sweep_grid(kv);
    const auto ranked = sweep(grid, log.events, log.schema, topt.sfc, opt.threads);
    const auto sweep_path = detail::sibling(out_path, ".sweep.csv");
    auto out = detail::open_out(sweep_path);
    out << "rank,config_index";
    for (const auto& [k, v] : grid.front().to_pairs()) out << ',' << k;
    out << ",final_logloss,final_sauc\n";
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      out << r + 1 << ',' << ranked[r].config_index;
      for (const auto& [k, v] : ranked[r].hp.to_pairs()) out << ',' << v;
      out << ',' << format_double(ranked[r].report.final_logloss) << ','
          << format_double(ranked[r].report.final_sauc) << '\n';
    }
    manifest.output(sweep_path);
    hp = ranked.front().hp;
  }

  Trainer trainer(log.schema, hp, topt.sfc, true);
  for (const auto& e : log.events) trainer.observe(e);
  const auto report = trainer.report();

  {
    auto out = detail::open_out(out_path);
    trainer.model().save(out);
  }
  const auto progress = topt.progress.value_or(detail::sibling(out_path, ".progress.csv"));
  {
    auto out = detail::open_out(progress);
    write_progress_csv(out, report);
  }
  manifest.output(out_path);
  manifest.output(progress);
  manifest.set("events", report.events_seen);
  manifest.set("final_logloss", format_double(report.final_logloss));
  manifest.set("final_sauc", format_double(report.final_sauc));
  manifest.set("seconds", report.seconds);
  manifest.set("events_per_second", report.events_per_second);
  manifest.write(detail::sibling(out_path, ".manifest.json"));
  return report;
}

enum class EvalMode { progressive, frozen };

inline EvalMode parse_eval_mode(std::string_view s) {
  if (s == "progressive") return EvalMode::progressive;
  if (s == "frozen") return EvalMode::frozen;
  throw ConfigError("unknown evaluation mode '" + std::string(s) + "'");
}

// evaluate: one metrics.csv row. Progressive mode replays the snapshot's
// configuration from scratch (score, then train); frozen mode scores the
// stream with the snapshot's parameters unchanged.
inline MetricsRow cmd_evaluate(const fs::path& model_path, const fs::path& events_path, const fs::path& out_path,
                               EvalMode mode, const std::string& name = {}) {
  RunManifest manifest("evaluate");
  std::ifstream in(model_path, std::ios::binary);
  if (!in) throw Error("cannot read '" + model_path.string() + "'");
  auto model = Model::load(in);
  const auto log = detail::load_events(events_path);
  detail::check_schema(model.schema(), log.schema, "model vs event log");
  manifest.input(model_path);
  manifest.input(events_path);
  manifest.set("mode", mode == EvalMode::progressive ? "progressive" : "frozen");

  const bool progressive = mode == EvalMode::progressive;
  Trainer trainer(progressive ? Model(model.schema(), model.hyper(), model.sfc_enabled()) : std::move(model), true);
  for (const auto& e : log.events) trainer.observe(e, progressive);
  auto row = summarize(name.empty() ? model_path.stem().string() : name, trainer.scored());
  {
    auto out = detail::open_out(out_path);
    write_metrics_csv(out, {row});
  }
  manifest.output(out_path);
  manifest.write(detail::sibling(out_path, ".manifest.json"));
  return row;
}

// simulate: buckets.csv, metrics.csv and one scored log per bucket in
// `out_dir`, plus manifest.json.
inline SimulationResult cmd_simulate(const fs::path& config_path, const fs::path& out_dir, const RunOptions& opt = {}) {
  RunManifest manifest("simulate");
  const auto kv = detail::load_config(config_path, opt);
  auto cfg = simulation_config_from(kv);
  cfg.threads = opt.threads;
  manifest.set_config(kv);
  manifest.seed(cfg.gen.seed);
  manifest.input(config_path);
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  std::map<std::string, std::ofstream> logs;
  for (const auto& b : cfg.buckets) {
    const auto p = out_dir / ("events_" + b.name + ".tsv");
    auto& out = logs[b.name] = detail::open_out(p);
    out << cfg.gen.schema.header_line() << '\n' << kColumnsTag << "\tprediction\tfrequency\n";
    manifest.output(p);
  }
  const auto& schema = cfg.gen.schema;
  ServedSink sink = [&](const std::string& bucket, const ImpressionEvent& e, double p, std::uint32_t f) {
    logs.at(bucket) << write_event_line(e, schema) << '\t' << format_double(p) << '\t' << f << '\n';
  };
  auto result = simulate(cfg, sink);
  for (auto& [k, s] : logs) s.close();

  const auto rows = bucket_report(result.buckets, cfg.baseline);
  {
    auto out = detail::open_out(out_dir / "buckets.csv");
    write_buckets_csv(out, rows);
  }
  std::vector<MetricsRow> metrics;
  nlohmann::ordered_json audit;
  for (const auto& b : result.buckets) {
    auto row = summarize(b.config.name, b.scored);
    row.cpm = b.cpm();
    metrics.push_back(row);
    audit[b.config.name] = {{"auctions", b.auctions},
                            {"unfilled", b.opportunities - b.auctions},
                            {"hfc_violations", b.hfc_violations},
                            {"gsp_violations", b.gsp_violations},
                            {"ranking_violations", b.ranking_violations}};
  }
  {
    auto out = detail::open_out(out_dir / "metrics.csv");
    write_metrics_csv(out, metrics);
  }
  manifest.output(out_dir / "buckets.csv");
  manifest.output(out_dir / "metrics.csv");
  manifest.set("audit", audit);
  manifest.write(out_dir / "manifest.json");
  return result;
}

// stats: nctr.csv (and segment.csv with a segment key) in `out_dir`. The
// frequency is the campaign view count over the previous week, replayed
// from the log itself.
inline void cmd_stats(const fs::path& events_path, const fs::path& out_dir, const std::optional<std::string>& segment,
                      std::uint32_t v_max = 50) {
  RunManifest manifest("stats");
  const auto log = detail::load_events(events_path);
  std::optional<SegmentKey> key;
  if (segment) key = resolve_segment_key(log.schema, *segment);
  manifest.input(events_path);
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  std::vector<ScoredEvent> scored;
  scored.reserve(log.events.size());
  FrequencyState state;
  for (const auto& e : log.events) {
    scored.push_back(make_scored(e, 0.5, state.frequency(e.user, e.ad, e.timestamp, kStatsFrequency)));
    state.record_view(e.user, e.ad, e.timestamp);
  }
  {
    auto out = detail::open_out(out_dir / "nctr.csv");
    write_nctr_csv(out, nctr_curve(scored, v_max));
  }
  manifest.output(out_dir / "nctr.csv");
  if (key) {
    auto out = detail::open_out(out_dir / "segment.csv");
    write_segment_csv(out, *segment, segment_breakdown(scored, *key, v_max));
    manifest.output(out_dir / "segment.csv");
    manifest.set("segment", *segment);
  }
  manifest.set("events", log.events.size());
  manifest.write(out_dir / "manifest.json");
}

// report: lifts.csv from one or more metrics.csv files. The baseline
// defaults to the first row read.
inline void cmd_report(const std::vector<fs::path>& metrics_paths, const fs::path& out_path,
                       const std::optional<std::string>& baseline) {
  RunManifest manifest("report");
  if (metrics_paths.empty()) throw ConfigError("report needs at least one metrics file");
  std::vector<MetricsRow> rows;
  for (const auto& p : metrics_paths) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot read '" + p.string() + "'");
    for (auto& r : read_metrics_csv(in)) rows.push_back(std::move(r));
    manifest.input(p);
  }
  if (rows.empty()) throw MetricError("no metrics rows to compare");
  const auto base = baseline.value_or(rows.front().name);
  {
    auto out = detail::open_out(out_path);
    write_lifts_csv(out, rows, base);
  }
  manifest.output(out_path);
  manifest.set("baseline", base);
  manifest.write(detail::sibling(out_path, ".manifest.json"));
}

// Single-line error text: "<kind>: <message>".
inline std::string error_line(const std::exception& e) {
  std::string kind = "error";
  if (dynamic_cast<const ParseError*>(&e)) kind = "parse_error";
  else if (dynamic_cast<const SchemaError*>(&e)) kind = "schema_error";
  else if (dynamic_cast<const OrderingError*>(&e)) kind = "ordering_error";
  else if (dynamic_cast<const ConfigError*>(&e)) kind = "config_error";
  else if (dynamic_cast<const MetricError*>(&e)) kind = "metric_error";
  std::string msg = e.what();
  for (auto& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  return kind + ": " + msg;
}

}  // namespace sfc
