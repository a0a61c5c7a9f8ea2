// Command-line entry point: generate / train / evaluate / simulate / stats / report.
#include <iostream>

#include <CLI11.hpp>

#include "sfc/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Streaming CTR prediction with soft frequency capping"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(sfc::kBuildId));

  sfc::RunOptions run;
  std::int64_t seed = -1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "override the config seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--threads", run.threads, "worker threads")->check(CLI::PositiveNumber);
  };

  std::string config, out, events, model, mode = "progressive", name, segment, baseline;
  std::string sfc_flag = "on";
  std::string progress;
  std::uint32_t v_max = 50;
  std::vector<std::string> metrics_files;

  auto* gen = app.add_subcommand("generate", "write a synthetic event log");
  gen->add_option("--config", config, "generator config")->required();
  gen->add_option("--out", out, "event log path")->required();
  add_common(gen);

  auto* train = app.add_subcommand("train", "train one pass over an event log");
  train->add_option("--config", config, "training config")->required();
  train->add_option("--events", events, "event log")->required();
  train->add_option("--out", out, "model snapshot path")->required();
  train->add_option("--sfc", sfc_flag, "on|off")->check(CLI::IsMember({"on", "off"}));
  train->add_option("--progress", progress, "progress CSV (default <out>.progress.csv)");
  add_common(train);

  auto* eval = app.add_subcommand("evaluate", "score an event log with a model");
  eval->add_option("--model", model, "model snapshot")->required();
  eval->add_option("--events", events, "event log")->required();
  eval->add_option("--out", out, "metrics CSV path")->required();
  eval->add_option("--mode", mode, "progressive|frozen")->check(CLI::IsMember({"progressive", "frozen"}));
  eval->add_option("--name", name, "row name (default: model file stem)");
  add_common(eval);

  auto* sim = app.add_subcommand("simulate", "run the multi-bucket auction simulation");
  sim->add_option("--config", config, "simulation config")->required();
  sim->add_option("--out", out, "output directory")->required();
  add_common(sim);

  auto* stats = app.add_subcommand("stats", "normalized CTR by frequency");
  stats->add_option("--events", events, "event log")->required();
  stats->add_option("--out", out, "output directory")->required();
  stats->add_option("--segment", segment, "section or a user feature name");
  stats->add_option("--v-max", v_max, "last (aggregated) frequency bin");
  add_common(stats);

  auto* report = app.add_subcommand("report", "lifts between metrics rows");
  report->add_option("metrics", metrics_files, "metrics CSV files")->required();
  report->add_option("--out", out, "lifts CSV path")->required();
  report->add_option("--baseline", baseline, "baseline row name (default: first row)");
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (seed >= 0) run.seed = static_cast<std::uint64_t>(seed);

  try {
    if (*gen) {
      sfc::cmd_generate(config, out, run);
    } else if (*train) {
      sfc::TrainOptions t;
      t.sfc = sfc_flag == "on";
      if (!progress.empty()) t.progress = progress;
      const auto r = sfc::cmd_train(config, events, out, t, run);
      std::cout << "events=" << r.events_seen << " logloss=" << sfc::format_double(r.final_logloss)
                << " sauc=" << sfc::format_double(r.final_sauc) << '\n';
    } else if (*eval) {
      const auto r = sfc::cmd_evaluate(model, events, out, sfc::parse_eval_mode(mode), name);
      std::cout << "events=" << r.events << " logloss=" << sfc::format_double(r.logloss)
                << " sauc=" << sfc::format_double(r.sauc) << '\n';
    } else if (*sim) {
      const auto r = sfc::cmd_simulate(config, out, run);
      for (const auto& b : r.buckets)
        std::cout << b.config.name << " impressions=" << b.total.impressions << " cpm=" << sfc::format_double(b.cpm())
                  << '\n';
    } else if (*stats) {
      sfc::cmd_stats(events, out, segment.empty() ? std::nullopt : std::optional<std::string>(segment), v_max);
    } else if (*report) {
      sfc::cmd_report({metrics_files.begin(), metrics_files.end()}, out,
                      baseline.empty() ? std::nullopt : std::optional<std::string>(baseline));
    }
  } catch (const std::exception& e) {
    std::cerr << sfc::error_line(e) << '\n';
    return 1;
  }
  return 0;
}
