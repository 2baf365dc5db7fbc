#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tardis/choice_dynamics.hpp"
#include "tardis/pricing_engine.hpp"
#include "tardis/traffic_model.hpp"
#include "tardis/user_choice.hpp"

namespace tardis {

enum class DaySource {
  /// Cycle through the trace's days.
  Recycle,
  /// Use each real day once, then synthesise statistically matched days.
  Synthesize,
};

std::string to_string(DaySource source);
DaySource parse_day_source(const std::string& name);

enum class SchemeKind { Percentile95, Linear, CappedLink };

std::string to_string(SchemeKind kind);
SchemeKind parse_scheme_kind(const std::string& name);

struct TraceSource {
  /// CSV trace file; empty selects the synthetic generator.
  std::string path;
  /// Seconds per window.
  double window_length = 3600.0;
  /// The seed here is ignored; each repeat derives its own.
  SyntheticTraceParams synthetic;
};

struct PricingConfig {
  SchemeKind scheme = SchemeKind::Percentile95;
  /// Relative price of each TPG, multiplied by `base_rate`.
  std::vector<double> ratios{10.0, 3.0, 1.0};
  double base_rate = 1.0;
  /// How percentile traffic is turned into slot prices. The cost itself
  /// always bills the unmodified 95th percentile.
  PercentileVariant price_function = PercentileVariant::ModifiedTop;
  /// Smoothed sigma as a fraction of the previous day's 95th percentile.
  double sigma_fraction = 0.05;
  std::size_t sample_count = 1000;
  /// Capped-link capacity per TPG (bytes per second).
  std::vector<double> capacity;
  double free_fraction = 0.8;
};

struct ScheduleConfig {
  std::size_t warmup_days = 50;
  std::size_t run_days = 500;
  std::size_t freeze_tail_days = 50;
  std::size_t eval_head_days = 50;
  double initial_scale = 0.1;
  double final_scale = 0.001;
};

struct ScenarioConfig {
  std::string scenario = "base";
  std::uint64_t seed = 1;
  TraceSource trace;
  TpgSplitPolicy tpg = TpgSplitPolicy::spaced(3, 2.0, 0.5);
  PricingConfig pricing;
  ScheduleConfig schedule;
  ChoiceModelConfig choice{1.0, 1.0, 0.1, 0.2, 18, {},
                           AssignmentPolicy::Proportional};
  DaySource day_source = DaySource::Recycle;
  std::size_t repeats = 10;
  /// Price on a random subset of this many users; 0 prices on everyone.
  std::size_t user_sample = 0;

  /// Throws ValidationError naming the offending field.
  void validate() const;
  /// The scheme TPG `tpg` is billed and priced under.
  PricingScheme tpg_scheme(std::size_t tpg) const;
};

/// Named price-ratio presets: "P_E" 1:1:1, "P_L" 4:2:1, "P_H" 10:3:1.
std::vector<double> price_ratio_preset(const std::string& name);
/// Named splitting presets "T0", "T2", "T4": three TPGs with peaks 0, 2 or
/// 4 hours apart, half the traffic split equally.
TpgSplitPolicy tpg_policy_preset(const std::string& name);

struct RunResult {
  std::size_t repeat = 0;
  /// Daily cost of the warm-up days, traffic at its origin.
  std::vector<double> warmup_cost;
  /// Daily cost of each simulated day.
  std::vector<double> daily_cost;
  /// Sum of V over choice sets on days the splits were updated; NaN on
  /// frozen days.
  std::vector<double> sum_v;
  double head_mean = 0.0;
  double tail_mean = 0.0;
  double reduction = 0.0;
  double theoretical_max = 0.0;
  std::vector<ChoiceSet> choice_sets;
  SplitState final_splits;
  /// Bytes the trace asked for over all simulated days (warm-up included).
  Bytes demanded_bytes = 0;
  /// Bytes that landed inside those days.
  Bytes realized_bytes = 0;
  /// Bytes delayed past the last day.
  Bytes carry_bytes = 0;
  std::uint64_t effective_seed = 0;
};

/// Runs one repeat: warm-up at the origin slots, then daily pricing, split
/// updates and realisation, with the splits frozen for the tail. The
/// reduction compares the first `eval_head_days` warm-up days against the
/// frozen tail.
RunResult run(const ScenarioConfig& config, std::size_t repeat = 0);

/// (mean(head) - mean(tail)) / mean(head).
double reduction_metric(std::span<const double> head,
                        std::span<const double> tail);

/// Shiftable share of all bytes: sum of volume * (1 - (1 - p_t)(1 - p_s))
/// over users, divided by the total.
double theoretical_max(std::span<const UserShiftProfile> profiles,
                       const TraceMatrix& trace);

struct Summary {
  std::vector<double> reductions;
  double mean = 0.0;
  /// Sample standard deviation (n - 1).
  double stddev = 0.0;
  /// stddev / mean.
  double cov = 0.0;
  double two_sigma = 0.0;
  double theoretical_max = 0.0;
};

Summary summarize(std::span<const double> reductions,
                  double theoretical_max);

struct RepeatOutcome {
  std::vector<RunResult> runs;
  Summary summary;
};

/// `repeats` independent runs with seeds derived from the master seed,
/// executed on up to `jobs` threads. Results do not depend on `jobs`.
RepeatOutcome repeat_and_summarize(const ScenarioConfig& config,
                                   std::size_t repeats, std::size_t jobs = 1);

/// "x ± y (z)": mean reduction, two standard deviations, theoretical max.
std::string format_cell(const Summary& summary);

/// `repeat,day,total_cost,sumV`; sumV is empty on frozen days.
void write_runs_csv(std::ostream& out, std::span<const RunResult> runs);
/// `scenario,mean_reduction,cov,two_sigma,theoretical_max`.
void write_summary_csv(std::ostream& out, const std::string& scenario,
                       const Summary& summary);

/// Shortest round-trip decimal form, locale independent.
std::string format_number(double value);

/// Runs `task(i)` for i in [0, count) on up to `jobs` threads and rethrows
/// the first failure (by index).
void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& task);

}  // namespace tardis
