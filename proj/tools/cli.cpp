#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include "tardis/choice_dynamics.hpp"
#include "tardis/error.hpp"
#include "tardis/scenario_config.hpp"
#include "tardis/sim_orchestrator.hpp"
#include "tardis/traffic_model.hpp"
#include "tardis/verify.hpp"

namespace tardis::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::vector<double> space_levels{0, 20, 40, 60};
  std::vector<double> time_levels{0, 10, 20};
  bool quiet = false;
  // ode
  double step = 1e-3;
  std::size_t max_steps = 1'000'000;
  double epsilon = 1e-6;
  std::size_t record_every = 1000;
};

// Writes through a temporary file so readers never see a partial result.
void write_file(const fs::path& path,
                const std::function<void(std::ostream&)>& body) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".")
                                                    : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    body(out);
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

ScenarioConfig load_with_overrides(const Options& o) {
  ScenarioConfig config = o.config.empty() ? ScenarioConfig{}
                                           : load_config(o.config);
  if (o.seed) config.seed = *o.seed;
  return config;
}

int cmd_run(const Options& o, std::ostream& out) {
  const ScenarioConfig config = load_with_overrides(o);
  out << "effective seed " << config.seed << '\n';
  const auto outcome = repeat_and_summarize(config, config.repeats, o.jobs);
  const fs::path dir(o.out);
  write_file(dir / "runs.csv",
             [&](std::ostream& f) { write_runs_csv(f, outcome.runs); });
  write_file(dir / "summary.csv", [&](std::ostream& f) {
    write_summary_csv(f, config.scenario, outcome.summary);
  });
  out << config.scenario << ": " << format_cell(outcome.summary) << '\n';
  return kExitOk;
}

int cmd_grid(const Options& o, std::ostream& out) {
  const ScenarioConfig base = load_with_overrides(o);
  out << "effective seed " << base.seed << '\n';
  struct Cell {
    double space = 0.0;
    double time = 0.0;
    std::optional<Summary> summary;
    std::string error;
  };
  std::vector<Cell> cells;
  for (double s : o.space_levels) {
    for (double t : o.time_levels) cells.push_back({s, t, std::nullopt, ""});
  }
  parallel_for(cells.size(), o.jobs, [&](std::size_t i) {
    Cell& cell = cells[i];
    try {
      ScenarioConfig config = base;
      config.choice.n_s = 1.0;
      config.choice.n_t = 1.0;
      config.choice.mu_s = cell.space / 100.0;
      config.choice.mu_t = cell.time / 100.0;
      cell.summary =
          repeat_and_summarize(config, config.repeats, 1).summary;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });
  write_file(fs::path(o.out) / "grid.csv", [&](std::ostream& f) {
    f << "space_pct,time_pct,mean_reduction,cov,two_sigma,theoretical_max,"
         "cell,error\n";
    for (const auto& c : cells) {
      f << format_number(c.space) << ',' << format_number(c.time) << ',';
      if (c.summary) {
        const auto& s = *c.summary;
        f << format_number(s.mean) << ',' << format_number(s.cov) << ','
          << format_number(s.two_sigma) << ','
          << format_number(s.theoretical_max) << ',' << format_cell(s)
          << ',';
      } else {
        std::string message = c.error;
        std::replace(message.begin(), message.end(), ',', ';');
        std::replace(message.begin(), message.end(), '\n', ' ');
        f << ",,,,," << message;
      }
      f << '\n';
    }
  });
  for (const auto& c : cells) {
    out << "space " << format_number(c.space) << "% time "
        << format_number(c.time) << "%: "
        << (c.summary ? format_cell(*c.summary) : "error: " + c.error)
        << '\n';
  }
  return kExitOk;
}

int cmd_verify(const Options& o, std::ostream& out) {
  VerifyOptions options;
  if (o.seed) options.seed = *o.seed;
  const auto report = run_verify(options);
  std::ostringstream text;
  write_verify_report(text, report);
  out << text.str();
  if (o.out != ".") {
    write_file(fs::path(o.out) / "verify.txt",
               [&](std::ostream& f) { f << text.str(); });
  }
  return report.all_passed() ? kExitOk : kExitRuntime;
}

int cmd_synth(const Options& o, std::ostream& out) {
  const ScenarioConfig config = load_with_overrides(o);
  SyntheticTraceParams params = config.trace.synthetic;
  params.seed = config.seed;
  out << "effective seed " << params.seed << '\n';
  const TraceMatrix trace = generate_synthetic_trace(params);
  const fs::path path = fs::path(o.out) / "trace.csv";
  write_file(path, [&](std::ostream& f) { write_trace(f, trace); });
  out << "wrote " << trace.users() << " users x " << trace.days()
      << " days x " << trace.windows_per_day() << " windows to "
      << path.string() << '\n';
  return kExitOk;
}

int cmd_ode(const Options& o, std::ostream& out) {
  // Two choice sets share a capped link; background traffic keeps both
  // capped links above their free level so prices stay continuous.
  FlowPriceModel model;
  model.grid = SlotGrid(3, 1);
  model.tpg_schemes = {CappedLinkScheme{2.0, 0.25},
                       CappedLinkScheme{2.0, 0.25}, LinearScheme{2.0}};
  model.background = {0.6, 0.6, 0.0};
  const std::vector<ChoiceSet> sets = {{0, {0, 1}, 0.6}, {1, {1, 2}, 0.5}};
  IntegrateOptions options;
  options.step = o.step;
  options.max_steps = o.max_steps;
  options.epsilon = o.epsilon;
  options.record_every = o.record_every;
  const auto report = integrate(sets, {{0.6, 0.0}, {0.5, 0.0}},
                                make_price_function(model, sets), options);
  write_file(fs::path(o.out) / "trajectory.csv", [&](std::ostream& f) {
    write_trajectory_csv(f, sets, report.trajectory);
  });
  out << "steps " << report.steps << ", equilibrium "
      << (report.reached_equilibrium ? "reached" : "not reached")
      << ", final sum V " << format_number(report.v_series.back()) << '\n';
  return report.reached_equilibrium ? kExitOk : kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Shapley-gradient slot pricing and day-to-day traffic "
               "reallocation simulator"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) {
      sub->add_option("--config", o.config, "Scenario JSON file");
    }
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--seed", o.seed, "Master seed override");
  };

  auto* run_cmd = app.add_subcommand("run", "Run one scenario");
  add_common(run_cmd, true);
  run_cmd->add_option("--jobs", o.jobs, "Parallel repeats")
      ->check(CLI::PositiveNumber);

  auto* grid_cmd = app.add_subcommand("grid", "Run a space x time grid");
  add_common(grid_cmd, true);
  grid_cmd->add_option("--jobs", o.jobs, "Parallel cells")
      ->check(CLI::PositiveNumber);
  grid_cmd->add_option("--space-levels", o.space_levels,
                       "Space-shift percentages")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 100.0));
  grid_cmd->add_option("--time-levels", o.time_levels,
                       "Time-shift percentages")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 100.0));

  auto* verify_cmd =
      app.add_subcommand("verify", "Run the exact-enumeration property suite");
  add_common(verify_cmd, false);

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic trace");
  add_common(synth_cmd, true);

  auto* ode_cmd =
      app.add_subcommand("ode", "Integrate the continuous dynamics");
  add_common(ode_cmd, false);
  ode_cmd->add_option("--step", o.step, "Euler step")
      ->check(CLI::PositiveNumber);
  ode_cmd->add_option("--max-steps", o.max_steps, "Step budget");
  ode_cmd->add_option("--epsilon", o.epsilon, "Equilibrium tolerance");
  ode_cmd->add_option("--record-every", o.record_every,
                      "Trajectory sampling interval");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run_cmd->parsed()) {
      if (o.config.empty()) throw ConfigError("run needs --config");
      return cmd_run(o, out);
    }
    if (grid_cmd->parsed()) {
      if (o.config.empty()) throw ConfigError("grid needs --config");
      return cmd_grid(o, out);
    }
    if (verify_cmd->parsed()) return cmd_verify(o, out);
    if (synth_cmd->parsed()) return cmd_synth(o, out);
    if (ode_cmd->parsed()) return cmd_ode(o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace tardis::cli
