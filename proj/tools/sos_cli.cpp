// sos: run scheduler experiments and sweeps, write CSV.
//
//   sos run   --config exp.conf [--baseline edf] [--out rows.csv]
//   sos sweep --config exp.conf --axis sigma --path 2 --values 1,5,10 --baseline sedpf
//   sos page  --config exp.conf --page page.csv [--policy fifo]

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sos/harness.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> scheduler;
  std::optional<std::size_t> replications;
  std::string baseline;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "root seed (overrides config)");
  cmd->add_option("--mode", c.mode, "parameter source")->check(CLI::IsMember({"oracle", "estimated"}));
  cmd->add_option("--scheduler", c.scheduler, "scheduler (overrides config)")
      ->check(CLI::IsMember({"sos", "sos_fec", "edf", "sedpf"}));
  cmd->add_option("--replications", c.replications, "replications per point");
  cmd->add_option("--baseline", c.baseline, "scheduler to compute improvements against")
      ->check(CLI::IsMember({"sos", "sos_fec", "edf", "sedpf"}));
  cmd->add_option("--out", c.out, "CSV output file (default stdout)");
}

sos::ExperimentConfig load(const Common& c) {
  auto cfg = sos::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.mode) cfg.mode = sos::parse_mode(*c.mode);
  if (c.scheduler) cfg.scheduler = sos::parse_scheduler(*c.scheduler);
  if (c.replications) cfg.replications = *c.replications;
  return cfg;
}

std::optional<sos::SchedulerKind> baseline_of(const Common& c) {
  if (c.baseline.empty()) return std::nullopt;
  return sos::parse_scheduler(c.baseline);
}

void emit(const std::vector<sos::MetricsRow>& rows, const Common& c) {
  if (c.out.empty()) {
    std::cout << sos::format_csv(rows);
  } else {
    sos::write_csv(rows, c.out);
  }
}

sos::MetricsRow run_with_baseline(const sos::ExperimentConfig& cfg, std::optional<sos::SchedulerKind> baseline) {
  auto row = sos::run_experiment(cfg);
  if (baseline) {
    auto b = cfg;
    b.scheduler = *baseline;
    sos::apply_improvement(row, sos::run_experiment(b));
  }
  return row;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multipath object scheduler experiments"};
  app.require_subcommand(1);

  Common run_opts;
  auto* run = app.add_subcommand("run", "run one experiment configuration");
  add_common(run, run_opts);

  Common sweep_opts;
  std::string axis;
  std::vector<double> values;
  std::size_t sweep_path = 1;
  auto* sweep = app.add_subcommand("sweep", "sweep one axis of a configuration");
  add_common(sweep, sweep_opts);
  sweep->add_option("--axis", axis, "sigma, object_size or gamma")
      ->required()
      ->check(CLI::IsMember({"sigma", "object_size", "gamma"}));
  sweep->add_option("--values", values, "comma-separated axis values")->required()->delimiter(',');
  sweep->add_option("--path", sweep_path, "1-based path whose sigma is swept")->check(CLI::PositiveNumber);

  Common page_opts;
  std::string page_file;
  std::string policy = "priority";
  auto* page = app.add_subcommand("page", "page-load experiment (DOM-complete times)");
  add_common(page, page_opts);
  page->add_option("--page", page_file, "page spec file (overrides config)")->check(CLI::ExistingFile);
  page->add_option("--policy", policy, "object ordering")->check(CLI::IsMember({"priority", "fifo"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      const auto cfg = load(run_opts);
      emit({run_with_baseline(cfg, baseline_of(run_opts))}, run_opts);
    } else if (sweep->parsed()) {
      const auto cfg = load(sweep_opts);
      const sos::SweepSpec spec{sos::parse_axis(axis), sweep_path - 1};
      emit(sos::run_sweep(cfg, spec, values, baseline_of(sweep_opts)), sweep_opts);
    } else if (page->parsed()) {
      auto cfg = load(page_opts);
      if (!page_file.empty()) cfg.page_path = page_file;
      if (cfg.page_path.empty()) throw sos::UsageError("no page spec given (--page or page = in config)");
      cfg.ordering = policy == "fifo" ? sos::OrderingPolicy::fifo : sos::OrderingPolicy::priority;
      if (cfg.label.empty()) cfg.label = std::string("page ") + policy;
      emit({run_with_baseline(cfg, baseline_of(page_opts))}, page_opts);
    }
  } catch (const sos::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const sos::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
