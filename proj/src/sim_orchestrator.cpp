#include "tardis/sim_orchestrator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "tardis/error.hpp"
#include "tardis/rng.hpp"

namespace tardis {
namespace {

constexpr std::uint64_t kTraceStream = 0x7472616365;
constexpr std::uint64_t kProfileStream = 0x70726f66696c65;
constexpr std::uint64_t kPricingStream = 0x70726963696e67;
constexpr std::uint64_t kAssignStream = 0x61737369676e;
constexpr std::uint64_t kExtraDayStream = 0x6578747261;
constexpr std::uint64_t kUserSampleStream = 0x73616d706c65;

constexpr std::size_t kNoSet = std::numeric_limits<std::size_t>::max();

double mean_of(std::span<const double> values) {
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

// Per-TPG [user][window] byte matrix of one day.
using DayVolumes = std::vector<std::vector<Bytes>>;

class DayProvider {
 public:
  DayProvider(const ScenarioConfig& config, const TraceMatrix& trace,
              std::uint64_t extra_seed)
      : config_(config),
        trace_(trace),
        tpg_traces_(split_by_tpg(trace, config.tpg)),
        extra_seed_(extra_seed) {}

  // Fills `out` with the demand of absolute day `day`.
  void fill(std::size_t day, DayVolumes& out) const {
    const std::size_t users = trace_.users();
    const std::size_t windows = trace_.windows_per_day();
    const std::size_t groups = tpg_traces_.size();
    out.assign(groups, std::vector<Bytes>(users * windows, 0));
    const bool real = config_.day_source == DaySource::Recycle ||
                      day < trace_.days();
    if (real) {
      const std::size_t source = day % trace_.days();
      for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t u = 0; u < users; ++u) {
          const auto row = tpg_traces_[g].day_row(u, source);
          std::copy(row.begin(), row.end(), out[g].begin() + u * windows);
        }
      }
      return;
    }
    const ExtraDay extra =
        generate_extra_day(trace_, derive_seed(extra_seed_, day));
    const TraceMatrix one_day(users, 1, windows, trace_.window_length(),
                              extra.volumes);
    const auto split = split_by_tpg(one_day, config_.tpg);
    for (std::size_t g = 0; g < groups; ++g) {
      const auto data = split[g].data();
      std::copy(data.begin(), data.end(), out[g].begin());
    }
  }

 private:
  const ScenarioConfig& config_;
  const TraceMatrix& trace_;
  std::vector<TraceMatrix> tpg_traces_;
  std::uint64_t extra_seed_;
};

TraceMatrix load_or_generate(const ScenarioConfig& config,
                             std::uint64_t trace_seed) {
  if (!config.trace.path.empty()) {
    return load_trace(config.trace.path, config.trace.window_length);
  }
  SyntheticTraceParams params = config.trace.synthetic;
  params.seed = trace_seed;
  return generate_synthetic_trace(params);
}

}  // namespace

std::string to_string(DaySource source) {
  return source == DaySource::Recycle ? "recycle" : "synthesize";
}

DaySource parse_day_source(const std::string& name) {
  if (name == "recycle") return DaySource::Recycle;
  if (name == "synthesize") return DaySource::Synthesize;
  throw ValidationError("unknown day source '" + name + "'");
}

std::string to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::Percentile95:
      return "percentile95";
    case SchemeKind::Linear:
      return "linear";
    case SchemeKind::CappedLink:
      return "capped_link";
  }
  return "unknown";
}

SchemeKind parse_scheme_kind(const std::string& name) {
  if (name == "percentile95") return SchemeKind::Percentile95;
  if (name == "linear") return SchemeKind::Linear;
  if (name == "capped_link") return SchemeKind::CappedLink;
  throw ValidationError("unknown pricing scheme '" + name + "'");
}

std::vector<double> price_ratio_preset(const std::string& name) {
  if (name == "P_E") return {1.0, 1.0, 1.0};
  if (name == "P_L") return {4.0, 2.0, 1.0};
  if (name == "P_H") return {10.0, 3.0, 1.0};
  throw ValidationError("unknown price ratio preset '" + name + "'");
}

TpgSplitPolicy tpg_policy_preset(const std::string& name) {
  if (name == "T0") return TpgSplitPolicy::spaced(3, 0.0, 0.5);
  if (name == "T2") return TpgSplitPolicy::spaced(3, 2.0, 0.5);
  if (name == "T4") return TpgSplitPolicy::spaced(3, 4.0, 0.5);
  throw ValidationError("unknown TPG split preset '" + name + "'");
}

void ScenarioConfig::validate() const {
  if (!(trace.window_length > 0.0)) {
    throw ValidationError("trace.window_length must be positive");
  }
  if (trace.path.empty()) trace.synthetic.validate();
  tpg.validate();
  choice.validate();
  const std::size_t groups = tpg.tpg_count;
  if (pricing.scheme != SchemeKind::CappedLink) {
    if (pricing.ratios.size() != groups) {
      throw ValidationError("pricing.ratios needs one entry per TPG");
    }
    for (double r : pricing.ratios) {
      if (!(r > 0.0) || !std::isfinite(r)) {
        throw ValidationError("pricing.ratios must be positive");
      }
    }
    if (!(pricing.base_rate > 0.0) || !std::isfinite(pricing.base_rate)) {
      throw ValidationError("pricing.base_rate must be positive");
    }
  } else if (pricing.capacity.size() != groups) {
    throw ValidationError("pricing.capacity needs one entry per TPG");
  }
  if (!(pricing.sigma_fraction >= 0.0)) {
    throw ValidationError("pricing.sigma_fraction must be >= 0");
  }
  if (pricing.price_function == PercentileVariant::Exact) {
    throw ValidationError(
        "pricing.price_function 'exact' cannot drive the dynamics; use "
        "modified_top or smoothed");
  }
  for (std::size_t g = 0; g < groups; ++g) tardis::validate(tpg_scheme(g));
  for (std::size_t g : choice.tpgs_available) {
    if (g >= groups) {
      throw ValidationError("choice.tpgs_available names TPG " +
                            std::to_string(g) + " outside the grid");
    }
  }
  const auto& s = schedule;
  if (s.warmup_days < 1) throw ValidationError("schedule.warmup_days must be >= 1");
  if (s.run_days < 1) throw ValidationError("schedule.run_days must be >= 1");
  if (s.freeze_tail_days < 1 || s.freeze_tail_days > s.run_days) {
    throw ValidationError(
        "schedule.freeze_tail_days must lie in [1, run_days]");
  }
  if (s.eval_head_days < 1 || s.eval_head_days > s.warmup_days) {
    throw ValidationError(
        "schedule.eval_head_days must lie in [1, warmup_days]");
  }
  StepSchedule{s.initial_scale, s.final_scale, s.run_days}.validate();
  if (repeats < 1) throw ValidationError("repeats must be >= 1");
}

PricingScheme ScenarioConfig::tpg_scheme(std::size_t g) const {
  switch (pricing.scheme) {
    case SchemeKind::Percentile95: {
      Percentile95Scheme p;
      p.rate = pricing.base_rate * pricing.ratios.at(g);
      p.variant = pricing.price_function;
      p.sample_count = pricing.sample_count;
      return p;
    }
    case SchemeKind::Linear:
      return LinearScheme{pricing.base_rate * pricing.ratios.at(g)};
    case SchemeKind::CappedLink:
      return CappedLinkScheme{pricing.capacity.at(g), pricing.free_fraction};
  }
  throw ValidationError("unknown pricing scheme");
}

double reduction_metric(std::span<const double> head,
                        std::span<const double> tail) {
  if (head.empty() || tail.empty()) {
    throw ValidationError("reduction needs nonempty head and tail series");
  }
  const double initial = mean_of(head);
  if (initial == 0.0) {
    throw ValidationError("reduction undefined: initial mean cost is zero");
  }
  return (initial - mean_of(tail)) / initial;
}

double theoretical_max(std::span<const UserShiftProfile> profiles,
                       const TraceMatrix& trace) {
  const Bytes total = trace.total();
  if (total == 0) return 0.0;
  double shiftable = 0.0;
  for (const auto& p : profiles) {
    if (p.user >= trace.users()) continue;
    const double share = 1.0 - (1.0 - p.p_t) * (1.0 - p.p_s);
    shiftable += static_cast<double>(trace.user_total(p.user)) * share;
  }
  return shiftable / static_cast<double>(total);
}

RunResult run(const ScenarioConfig& config, std::size_t repeat) {
  config.validate();
  RunResult result;
  result.repeat = repeat;
  result.effective_seed = config.seed;

  const TraceMatrix trace =
      load_or_generate(config, derive_seed(config.seed, kTraceStream, repeat));
  const std::size_t users = trace.users();
  const std::size_t windows = trace.windows_per_day();
  const std::size_t groups = config.tpg.tpg_count;
  const double window_length = trace.window_length();
  const SlotGrid grid(groups, windows);

  const auto profiles = draw_profiles(
      config.choice, users, derive_seed(config.seed, kProfileStream, repeat));
  result.theoretical_max = theoretical_max(profiles, trace);

  // Shared choice sets: one per distinct slot list.
  bool kind_used[4] = {false, false, false, false};
  for (const auto& p : profiles) {
    kind_used[static_cast<int>(ShiftKind::SpaceOnly)] |=
        p.p_s > 0.0 && p.p_t < 1.0;
    kind_used[static_cast<int>(ShiftKind::TimeOnly)] |=
        p.p_t > 0.0 && p.p_s < 1.0;
    kind_used[static_cast<int>(ShiftKind::Both)] |= p.p_t > 0.0 && p.p_s > 0.0;
  }
  std::vector<std::size_t> set_of(4 * groups * windows, kNoSet);
  auto set_index = [&](ShiftKind kind, std::size_t g, std::size_t w) {
    return (static_cast<std::size_t>(kind) * groups + g) * windows + w;
  };
  std::map<std::vector<std::size_t>, std::size_t> known;
  std::vector<ChoiceSet>& sets = result.choice_sets;
  for (ShiftKind kind : kShiftKinds) {
    if (!kind_used[static_cast<int>(kind)]) continue;
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t w = 0; w < windows; ++w) {
        ChoiceSet set = build_choice_set(grid, config.choice, kind, g, w);
        if (set.size() < 2) continue;
        auto [it, inserted] = known.emplace(set.slots, sets.size());
        if (inserted) {
          set.id = sets.size();
          sets.push_back(std::move(set));
        }
        set_of[set_index(kind, g, w)] = it->second;
      }
    }
  }
  SplitState splits = SplitState::uniform(sets);
  std::vector<std::vector<Slot>> slot_info(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t id : sets[i].slots) slot_info[i].push_back(grid.slot(id));
  }

  const auto& sched = config.schedule;
  const StepSchedule schedule{sched.initial_scale, sched.final_scale,
                              sched.run_days};
  const DayProvider provider(config, trace,
                             derive_seed(config.seed, kExtraDayStream, repeat));
  const std::uint64_t pricing_seed =
      derive_seed(config.seed, kPricingStream, repeat);
  const std::uint64_t assign_seed =
      derive_seed(config.seed, kAssignStream, repeat);

  std::vector<PricingScheme> schemes;
  for (std::size_t g = 0; g < groups; ++g) {
    schemes.push_back(config.tpg_scheme(g));
  }

  // Users whose traffic enters the price computation.
  std::vector<std::size_t> priced_users(users);
  std::iota(priced_users.begin(), priced_users.end(), std::size_t{0});
  if (config.user_sample > 0 && config.user_sample < users) {
    Rng rng = make_rng(derive_seed(config.seed, kUserSampleStream, repeat));
    for (std::size_t i = 0; i < config.user_sample; ++i) {
      const auto j = i + static_cast<std::size_t>(
                             uniform_index(rng, users - i));
      std::swap(priced_users[i], priced_users[j]);
    }
    priced_users.resize(config.user_sample);
    std::sort(priced_users.begin(), priced_users.end());
  }

  DayVolumes demand;
  DayVolumes realized(groups, std::vector<Bytes>(users * windows, 0));
  DayVolumes carry = realized;
  std::vector<double> set_demand(sets.size(), 0.0);
  std::vector<Bytes> buffer;
  Rng rng;

  auto realize = [&](std::size_t day, bool at_origin) {
    provider.fill(day, demand);
    DayVolumes next_carry(groups, std::vector<Bytes>(users * windows, 0));
    realized = carry;
    std::fill(set_demand.begin(), set_demand.end(), 0.0);
    for (std::size_t u = 0; u < users; ++u) {
      bool rng_ready = false;
      const auto& profile = profiles[u];
      for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t w = 0; w < windows; ++w) {
          const Bytes v = demand[g][u * windows + w];
          result.demanded_bytes += v;
          if (v == 0) continue;
          Bytes& home = realized[g][u * windows + w];
          const ShiftPartition part = partition_volume(v, profile);
          home += part.immovable;
          for (ShiftKind kind :
               {ShiftKind::SpaceOnly, ShiftKind::TimeOnly, ShiftKind::Both}) {
            const Bytes amount = part.of(kind);
            if (amount == 0) continue;
            const std::size_t id = set_of[set_index(kind, g, w)];
            if (id == kNoSet) {
              home += amount;
              continue;
            }
            set_demand[id] += static_cast<double>(amount);
            if (at_origin) {
              home += amount;
              continue;
            }
            if (config.choice.policy == AssignmentPolicy::AllOrNothing &&
                !rng_ready) {
              rng.seed(mix_seed(derive_seed(assign_seed, day, u)));
              rng_ready = true;
            }
            buffer.resize(sets[id].size());
            assign_into(amount, splits.rows[id], config.choice.policy, rng,
                        buffer);
            for (std::size_t j = 0; j < buffer.size(); ++j) {
              if (buffer[j] == 0) continue;
              const Slot& s = slot_info[id][j];
              auto& target = landing_day_offset(w, s.window) ? next_carry
                                                             : realized;
              target[s.tpg][u * windows + s.window] += buffer[j];
            }
          }
        }
      }
    }
    carry = std::move(next_carry);
    double cost = 0.0;
    std::vector<double> aggregate(windows);
    for (std::size_t g = 0; g < groups; ++g) {
      std::fill(aggregate.begin(), aggregate.end(), 0.0);
      Bytes landed = 0;
      for (std::size_t u = 0; u < users; ++u) {
        for (std::size_t w = 0; w < windows; ++w) {
          const Bytes b = realized[g][u * windows + w];
          aggregate[w] += static_cast<double>(b);
          landed += b;
        }
      }
      result.realized_bytes += landed;
      for (double& a : aggregate) a /= window_length;
      try {
        cost += aggregate_cost(schemes[g], aggregate, window_length);
      } catch (const CapacityExceeded& e) {
        throw CapacityExceeded("day " + std::to_string(day) + ", TPG " +
                               std::to_string(g) + ": " + e.what());
      }
    }
    if (!std::isfinite(cost)) {
      throw NonFiniteValue("non-finite cost on day " + std::to_string(day));
    }
    return cost;
  };

  // Per-slot prices from the realised traffic of the previous day.
  auto price_previous_day = [&](std::size_t run_day) {
    SlotPriceVector prices(grid.size(), 0.0);
    SamplingOptions options;
    options.seed = derive_seed(pricing_seed, run_day);
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<double> rates;
      std::size_t active = 0;
      for (std::size_t u : priced_users) {
        const auto begin = realized[g].begin() +
                           static_cast<std::ptrdiff_t>(u * windows);
        if (std::all_of(begin, begin + static_cast<std::ptrdiff_t>(windows),
                        [](Bytes b) { return b == 0; })) {
          continue;
        }
        for (std::size_t w = 0; w < windows; ++w) {
          rates.push_back(static_cast<double>(begin[w]) / window_length);
        }
        ++active;
      }
      if (active == 0) continue;
      const TpgPeriodTraffic traffic(active, windows, std::move(rates),
                                     window_length);
      PricingScheme scheme = schemes[g];
      if (auto* p = std::get_if<Percentile95Scheme>(&scheme);
          p && p->variant == PercentileVariant::Smoothed) {
        p->sigma = config.pricing.sigma_fraction *
                   percentile_95_rate(traffic.aggregate());
      }
      SlotPriceVector g_prices;
      try {
        g_prices = shapley_gradient(scheme, traffic, options);
      } catch (const CapacityExceeded& e) {
        throw CapacityExceeded("run day " + std::to_string(run_day) +
                               ", TPG " + std::to_string(g) + ": " + e.what());
      }
      std::copy(g_prices.begin(), g_prices.end(),
                prices.begin() + static_cast<std::ptrdiff_t>(g * windows));
    }
    return prices;
  };

  for (std::size_t d = 0; d < sched.warmup_days; ++d) {
    result.warmup_cost.push_back(realize(d, true));
  }
  const std::size_t update_days = sched.run_days - sched.freeze_tail_days;
  for (std::size_t t = 0; t < sched.run_days; ++t) {
    const std::size_t day = sched.warmup_days + t;
    double sum_v = std::numeric_limits<double>::quiet_NaN();
    if (t < update_days && !sets.empty()) {
      const auto prices = price_previous_day(t);
      sum_v = 0.0;
      for (std::size_t i = 0; i < sets.size(); ++i) {
        const auto p = local_prices(sets[i], prices);
        auto& row = splits.rows[i];
        std::vector<double> x(row.size());
        for (std::size_t j = 0; j < row.size(); ++j) {
          x[j] = set_demand[i] * row[j];
        }
        sum_v += lyapunov_row(x, p);
        row = update_split_row(row, p, schedule, t).s;
      }
    } else if (t < update_days) {
      sum_v = 0.0;
    }
    result.sum_v.push_back(sum_v);
    result.daily_cost.push_back(realize(day, false));
  }

  for (const auto& c : carry) {
    for (Bytes b : c) result.carry_bytes += b;
  }
  // The head is the start of the simulation, before any traffic moved.
  const auto head =
      std::span<const double>(result.warmup_cost).first(sched.eval_head_days);
  const auto tail =
      std::span<const double>(result.daily_cost).last(sched.freeze_tail_days);
  result.head_mean = mean_of(head);
  result.tail_mean = mean_of(tail);
  result.reduction = reduction_metric(head, tail);
  result.final_splits = std::move(splits);
  return result;
}

Summary summarize(std::span<const double> reductions,
                  double theoretical_max_value) {
  if (reductions.empty()) throw ValidationError("nothing to summarize");
  Summary s;
  s.reductions.assign(reductions.begin(), reductions.end());
  s.mean = mean_of(reductions);
  if (reductions.size() > 1) {
    double sq = 0.0;
    for (double r : reductions) sq += (r - s.mean) * (r - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(reductions.size() - 1));
  }
  s.cov = s.stddev == 0.0 ? 0.0 : s.stddev / s.mean;
  s.two_sigma = 2.0 * s.stddev;
  s.theoretical_max = theoretical_max_value;
  return s;
}

void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  std::vector<std::exception_ptr> errors(count);
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::mutex mutex;
    std::size_t next = 0;
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(mutex);
            if (next == count) return;
            i = next++;
          }
          try {
            task(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

RepeatOutcome repeat_and_summarize(const ScenarioConfig& config,
                                   std::size_t repeats, std::size_t jobs) {
  if (repeats < 1) throw ValidationError("repeats must be >= 1");
  config.validate();
  RepeatOutcome outcome;
  outcome.runs.resize(repeats);
  parallel_for(repeats, jobs,
               [&](std::size_t r) { outcome.runs[r] = run(config, r); });
  std::vector<double> reductions;
  double tmax = 0.0;
  for (const auto& r : outcome.runs) {
    reductions.push_back(r.reduction);
    tmax += r.theoretical_max;
  }
  outcome.summary =
      summarize(reductions, tmax / static_cast<double>(repeats));
  return outcome;
}

std::string format_cell(const Summary& summary) {
  char buffer[96];
  std::snprintf(buffer, sizeof buffer, "%.2f ± %.2f (%.2f)", summary.mean,
                summary.two_sigma, summary.theoretical_max);
  return buffer;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  char buffer[64];
  const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, end);
}

void write_runs_csv(std::ostream& out, std::span<const RunResult> runs) {
  out << "repeat,day,total_cost,sumV\n";
  for (const auto& r : runs) {
    for (std::size_t d = 0; d < r.daily_cost.size(); ++d) {
      out << r.repeat << ',' << d << ',' << format_number(r.daily_cost[d])
          << ',';
      if (d < r.sum_v.size() && !std::isnan(r.sum_v[d])) {
        out << format_number(r.sum_v[d]);
      }
      out << '\n';
    }
  }
}

void write_summary_csv(std::ostream& out, const std::string& scenario,
                       const Summary& summary) {
  out << "scenario,mean_reduction,cov,two_sigma,theoretical_max\n";
  out << scenario << ',' << format_number(summary.mean) << ','
      << format_number(summary.cov) << ',' << format_number(summary.two_sigma)
      << ',' << format_number(summary.theoretical_max) << '\n';
}

}  // namespace tardis
