// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "../tools/cli.hpp"
#include "tardis/choice_dynamics.hpp"
#include "tardis/oracle.hpp"
#include "tardis/pricing_engine.hpp"
#include "tardis/rng.hpp"
#include "tardis/scenario_config.hpp"
#include "tardis/sim_orchestrator.hpp"
#include "tardis/user_choice.hpp"

using namespace tardis;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0,
                double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

double rel_err(double got, double want) {
  const double scale = std::max(std::abs(want), 1e-300);
  return std::abs(got - want) / scale;
}

TpgPeriodTraffic uniform_traffic(std::size_t users, std::size_t windows,
                                 std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<double> rates(users * windows);
  for (double& r : rates) r = 1.0 + 9.0 * uniform01(rng);
  return TpgPeriodTraffic(users, windows, std::move(rates));
}

SamplingOptions exact_mode() {
  SamplingOptions o;
  o.mode = SamplingMode::Exact;
  return o;
}

// ---------------------------------------------------------------------------

Outcome shapley_exactness() {
  const auto start = Clock::now();
  const auto traffic = uniform_traffic(4, 6, 101);
  const Percentile95Scheme scheme{2.0, PercentileVariant::Exact, 0.0, 1000};
  const double total = period_cost(scheme, traffic);

  const auto phi = shapley_values(scheme, traffic, 1, 0, SamplingMode::Exact);
  const double phi_err =
      rel_err(std::accumulate(phi.begin(), phi.end(), 0.0), total);

  // Each arrangement with a nonempty prefix puts total weight one on the
  // billed window, so the gradients add up to r N/(N+1); rescaled by
  // (N+1)/N and the billed rate they reproduce the cost actually paid.
  const auto g = shapley_gradient(scheme, traffic, exact_mode());
  const double f95 = oracle::percentile_rate(traffic.aggregate());
  const double g_sum = std::accumulate(g.begin(), g.end(), 0.0);
  const double sum_err = rel_err(g_sum * 5.0 / 4.0 * f95, total);

  // Independent brute force over all 5! arrangements.
  const auto ref = oracle::percentile_gradient(scheme, traffic);
  double oracle_err = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) {
    oracle_err = std::max(oracle_err, std::abs(g[j] - ref[j]) / scheme.rate);
  }
  const double elapsed = seconds_since(start);
  return {phi_err <= 1e-9 && sum_err <= 1e-9 && oracle_err <= 1e-9 &&
              elapsed < 1.0,
          fmt("efficiency rel err %.2e, gradient-sum rel err %.2e, "
              "oracle gap %.2e, %.3f s",
              phi_err, sum_err, oracle_err, elapsed)};
}

Outcome per_user_identity() {
  const auto traffic = uniform_traffic(4, 6, 101);
  const Percentile95Scheme scheme{2.0, PercentileVariant::Exact, 0.0, 1000};
  const auto g = shapley_gradient(scheme, traffic, exact_mode());
  double worst = 0.0;
  for (std::size_t j = 0; j < traffic.windows(); ++j) {
    const auto r = per_user_gradient(scheme, traffic, j);
    const double want = 5.0 / 4.0 * g[j];
    const double err = want == 0.0 ? std::abs(r.mean)
                                   : rel_err(r.mean, want);
    worst = std::max(worst, err);
  }
  bool constant = true;
  const std::vector<PricingScheme> flat = {LinearScheme{1.7},
                                           CappedLinkScheme{60.0, 0.3}};
  for (const auto& s : flat) {
    for (std::size_t j = 0; j < traffic.windows(); ++j) {
      const auto r = per_user_gradient(s, traffic, j);
      for (double v : r.values) constant &= v == r.values.front();
    }
  }
  return {worst <= 1e-9 && constant,
          fmt("max rel err of mean vs (N+1)/N G_j %.2e; ", worst) +
              (constant ? "linear and capped-link constant across users"
                        : "linear or capped-link varies across users")};
}

Outcome sampling_quality() {
  const auto start = Clock::now();
  const auto traffic = uniform_traffic(6, 8, 303);
  std::string detail;
  bool ok = true;
  for (auto variant : {PercentileVariant::Exact, PercentileVariant::ModifiedTop}) {
    const Percentile95Scheme scheme{1.0, variant, 0.0, 1000};
    const auto exact = shapley_gradient(scheme, traffic, exact_mode());
    constexpr int kEstimates = 200;
    std::vector<double> sum(8, 0.0), sq(8, 0.0);
    for (int e = 0; e < kEstimates; ++e) {
      SamplingOptions o;
      o.seed = derive_seed(303, 1, static_cast<std::uint64_t>(e));
      o.mode = SamplingMode::Sampled;
      o.sample_count = 1000;
      const auto g = shapley_gradient(scheme, traffic, o);
      for (std::size_t j = 0; j < 8; ++j) {
        sum[j] += g[j];
        sq[j] += g[j] * g[j];
      }
    }
    double worst_z = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      const double mean = sum[j] / kEstimates;
      const double var =
          std::max(0.0, (sq[j] - kEstimates * mean * mean) / (kEstimates - 1));
      const double se = std::sqrt(var / kEstimates);
      const double gap = std::abs(mean - exact[j]);
      const double z = se > 0.0 ? gap / se : (gap <= 1e-15 ? 0.0 : INFINITY);
      ok &= z <= 3.0;
      worst_z = std::max(worst_z, z);
    }
    detail += to_string(variant) + fmt(" max |z| %.2f; ", worst_z);
  }
  const double elapsed = seconds_since(start);
  ok &= elapsed < 30.0;
  return {ok, detail + fmt("%.2f s", elapsed)};
}

Outcome closed_forms() {
  const auto traffic = uniform_traffic(3, 5, 404);
  bool linear_ok = true;
  for (double r : {0.0, 0.37, 3.0, 1e6}) {
    for (double g : shapley_gradient(LinearScheme{r}, traffic)) {
      linear_ok &= g == r;
    }
  }
  Rng rng = make_rng(404);
  double worst = 0.0;
  int above = 0;
  for (int i = 0; i < 20; ++i) {
    const double m = 0.5 + 10.0 * uniform01(rng);
    const double alpha = 0.05 + 0.9 * uniform01(rng);
    const double f = 0.999 * m * uniform01(rng);
    const TpgPeriodTraffic one(1, 1, {f});
    const double got =
        shapley_gradient(CappedLinkScheme{m, alpha}, one).front();
    const double want =
        f < alpha * m ? 0.0 : (1.0 - alpha) * m / ((m - f) * (m - f));
    above += f >= alpha * m;
    worst = std::max(worst, want == 0.0 ? std::abs(got) : rel_err(got, want));
  }
  return {linear_ok && worst <= 1e-12,
          std::string(linear_ok ? "linear equals r exactly" : "linear differs") +
              fmt("; capped-link max rel err %.2e over 20 points (%g above "
                  "the free level)",
                  worst, above)};
}

Outcome smoothing_limit() {
  const auto traffic = uniform_traffic(6, 8, 505);
  const double f95 = percentile_95_rate(traffic.aggregate());
  const std::vector<double> sigmas = {0.2 * f95, 0.1 * f95, 0.05 * f95, 0.0};
  const auto gaps = smoothed_convergence_check(traffic, 1.0, sigmas, 1000, 5);
  bool ok = gaps.back() == 0.0;
  for (std::size_t i = 1; i < gaps.size(); ++i) ok &= gaps[i] <= gaps[i - 1];
  return {ok, fmt("gaps %.3e, %.3e, %.3e, ", gaps[0], gaps[1], gaps[2]) +
                  fmt("%.3e", gaps[3])};
}

Outcome ode_stability() {
  FlowPriceModel model;
  model.grid = SlotGrid(3, 1);
  model.tpg_schemes = {CappedLinkScheme{2.0, 0.25},
                       CappedLinkScheme{2.0, 0.25}, LinearScheme{2.0}};
  model.background = {0.6, 0.6, 0.0};
  const std::vector<ChoiceSet> sets = {{0, {0, 1}, 0.6}, {1, {1, 2}, 0.5}};
  IntegrateOptions options;
  options.step = 1e-3;
  options.max_steps = 1'000'000;
  options.epsilon = 1e-6;
  const auto report = integrate(sets, {{0.6, 0.0}, {0.5, 0.0}},
                                make_price_function(model, sets), options);
  std::size_t rises = 0;
  for (std::size_t i = 1; i < report.v_series.size(); ++i) {
    rises += report.v_series[i] > report.v_series[i - 1];
  }

  const std::vector<ChoiceSet> pair = {{0, {0, 1}, 1.0}};
  IntegrateOptions lin;
  lin.step = 1e-3;
  lin.record_every = 5000;
  const auto decay = integrate(
      pair, {{1.0, 0.0}},
      [](const FlowMatrix&) { return SlotPriceVector{2.0, 1.0}; }, lin);
  double at5 = NAN;
  for (const auto& s : decay.trajectory) {
    if (s.step == 5000) at5 = s.x[0][0];
  }
  const double track = rel_err(at5, std::exp(-5.0));
  return {rises == 0 && report.reached_equilibrium &&
              report.steps <= 1'000'000 && track <= 0.01,
          fmt("%g steps to equilibrium, %g V increases; ", report.steps,
              rises) +
              fmt("X(5) = %.6f vs exp(-5) = %.6f (rel err %.2e)", at5,
                  std::exp(-5.0), track)};
}

Outcome update_invariances() {
  // Prices come from real percentile gradients with the mantissa cut to 40
  // bits, so that multiplying by 10 or by the per-TPG factors is exact.
  auto trim = [](double p) {
    int e = 0;
    const double m = std::frexp(p, &e);
    return std::ldexp(std::round(std::ldexp(m, 40)), e - 40);
  };
  const std::size_t windows = 24;
  const SlotGrid grid(3, windows);
  ChoiceModelConfig time_only;
  time_only.max_delay_windows = 6;
  std::vector<ChoiceSet> sets;
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t w = 0; w < windows; w += 5) {
      auto set = build_choice_set(grid, time_only, ShiftKind::TimeOnly, g, w);
      set.id = sets.size();
      sets.push_back(set);
    }
  }
  const StepSchedule schedule{0.1, 0.001, 100};
  const std::vector<double> tpg_factor = {3.0, 0.375, 7.0};
  auto global = SplitState::uniform(sets);
  auto scaled = global;
  auto per_tpg = global;
  auto reference = global;
  bool global_same = true;
  bool tpg_same = true;
  double unrounded_gap = 0.0;
  auto plain = global;
  auto plain10 = global;
  for (std::size_t t = 0; t < 100; ++t) {
    std::vector<double> prices(grid.size());
    for (std::size_t g = 0; g < 3; ++g) {
      const auto traffic = uniform_traffic(5, windows, derive_seed(7, g, t));
      SamplingOptions o;
      o.seed = derive_seed(8, g, t);
      o.sample_count = 200;
      const auto p = shapley_gradient(
          Percentile95Scheme{1.0 + g, PercentileVariant::ModifiedTop, 0.0, 200},
          traffic, o);
      for (std::size_t w = 0; w < windows; ++w) prices[grid.id(g, w)] = p[w];
    }
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const auto local = local_prices(sets[i], prices);
      std::vector<double> base(local.size()), x10(local.size()),
          xc(local.size()), raw10(local.size());
      const double c = tpg_factor[grid.slot(sets[i].slots[0]).tpg];
      for (std::size_t j = 0; j < local.size(); ++j) {
        base[j] = trim(local[j]);
        x10[j] = base[j] * 10.0;
        xc[j] = base[j] * c;
        raw10[j] = local[j] * 10.0;
      }
      reference.rows[i] =
          update_split_row(reference.rows[i], base, schedule, t).s;
      scaled.rows[i] = update_split_row(scaled.rows[i], x10, schedule, t).s;
      per_tpg.rows[i] = update_split_row(per_tpg.rows[i], xc, schedule, t).s;
      global_same &= scaled.rows[i] == reference.rows[i];
      tpg_same &= per_tpg.rows[i] == reference.rows[i];
      plain.rows[i] = update_split_row(plain.rows[i], local, schedule, t).s;
      plain10.rows[i] =
          update_split_row(plain10.rows[i], raw10, schedule, t).s;
      for (std::size_t j = 0; j < local.size(); ++j) {
        unrounded_gap = std::max(
            unrounded_gap, std::abs(plain.rows[i][j] - plain10.rows[i][j]));
      }
    }
  }

  // Row sums before renormalisation over a 500-iteration run, including a
  // 57-slot set.
  ChoiceModelConfig both;
  const auto big = build_choice_set(grid, both, ShiftKind::Both, 1, 20);
  const auto small = build_choice_set(grid, both, ShiftKind::SpaceOnly, 0, 3);
  const StepSchedule long_schedule{0.1, 0.001, 500};
  Rng rng = make_rng(77);
  double worst_sum = 0.0;
  for (const auto* set : {&big, &small}) {
    std::vector<double> s(set->size(), 1.0 / static_cast<double>(set->size()));
    for (std::size_t t = 0; t < 500; ++t) {
      std::vector<double> p(set->size());
      for (double& x : p) x = 0.1 + uniform01(rng);
      const auto r = update_split_row(s, p, long_schedule, t);
      worst_sum = std::max(worst_sum, std::abs(r.raw_sum - 1.0));
      s = r.s;
    }
  }
  return {global_same && tpg_same && worst_sum <= 1e-9,
          std::string(global_same ? "x10 bitwise identical"
                                  : "x10 trajectories differ") +
              (tpg_same ? ", per-TPG scaling bitwise identical"
                        : ", per-TPG trajectories differ") +
              fmt(" over 100 iterations; max |row sum - 1| %.2e; "
                  "untrimmed x10 drift %.1e",
                  worst_sum, unrounded_gap)};
}

Outcome choice_moments() {
  bool ok = true;
  std::string detail;
  for (double mu : {0.1, 0.25, 0.5}) {
    ChoiceModelConfig c;
    c.n_t = 1.0;
    c.mu_t = mu;
    const auto profiles = draw_profiles(c, 100000, 808);
    double sum = 0.0;
    for (const auto& p : profiles) sum += p.p_t;
    const double mean = sum / 1e5;
    ok &= std::abs(mean - mu) <= 0.01;
    detail += fmt("mu %.2f: mean %.5f (abs %.1e, rel %.2f%%); ", mu, mean,
                  std::abs(mean - mu), 100.0 * std::abs(mean - mu) / mu);
  }
  ChoiceModelConfig one;
  one.n_t = 1.0;
  one.mu_t = 1.0;
  bool all_one = true;
  for (const auto& p : draw_profiles(one, 100000, 809)) all_one &= p.p_t == 1.0;
  ok &= all_one;
  return {ok, detail + (all_one ? "mu 1: P = 1 for every draw"
                                : "mu 1: some P differs from 1")};
}

ScenarioConfig base_scenario() {
  return load_config(fs::path(TARDIS_SOURCE_DIR) / "configs" / "base.json");
}

Outcome end_to_end() {
  const auto start = Clock::now();
  ScenarioConfig config = base_scenario();
  config.choice.n_s = 1.0;
  config.choice.n_t = 1.0;
  config.choice.mu_s = 0.2;
  config.choice.mu_t = 0.1;
  const auto shifted = repeat_and_summarize(config, 5, 1).summary;
  ScenarioConfig control = config;
  control.choice.mu_s = 0.0;
  control.choice.mu_t = 0.0;
  const auto still = repeat_and_summarize(control, 5, 1).summary;
  const double elapsed = seconds_since(start);
  const bool ok = shifted.mean > 0.0 &&
                  shifted.mean <= shifted.theoretical_max + shifted.two_sigma &&
                  std::abs(still.mean) <= still.two_sigma && elapsed < 600.0;
  return {ok, "shift " + format_cell(shifted) +
                  fmt("; control mean %.2e, 2 sigma %.2e; %.0f s", still.mean,
                      still.two_sigma, elapsed)};
}

Outcome null_scenarios() {
  ScenarioConfig config = base_scenario();
  config.pricing.ratios = price_ratio_preset("P_E");
  config.choice.n_t = 0.0;
  config.choice.mu_t = 0.0;
  config.choice.n_s = 1.0;
  config.choice.mu_s = 0.2;
  config.tpg = tpg_policy_preset("T0");
  const auto t0 = repeat_and_summarize(config, 5, 1).summary;
  config.tpg = tpg_policy_preset("T2");
  const auto t2 = repeat_and_summarize(config, 5, 1).summary;
  const bool ok = std::abs(t0.mean) <= t0.two_sigma && t2.mean > 0.0;
  return {ok, fmt("P_E+T0 space-only %.4f +/- %.4f; ", t0.mean, t0.two_sigma) +
                  fmt("P_E+T2 space-only %.4f +/- %.4f", t2.mean,
                      t2.two_sigma)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "tardis_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "config.json";
  std::ofstream(config) << R"({
    "scenario": "determinism",
    "seed": 5,
    "trace": {"synthetic": {"users": 40, "days": 7}},
    "pricing": {"sample_count": 100},
    "choice": {"mu_t": 0.2, "mu_s": 0.3, "max_delay_windows": 6},
    "schedule": {"warmup_days": 7, "run_days": 21, "freeze_tail_days": 7,
                 "eval_head_days": 7},
    "repeats": 2
  })";
  struct Command {
    std::string name;
    std::vector<std::string> args;
    std::vector<std::string> files;
  };
  const std::vector<Command> commands = {
      {"run", {"run", "--config", config.string()}, {"runs.csv", "summary.csv"}},
      {"grid",
       {"grid", "--config", config.string(), "--space-levels", "0,20",
        "--time-levels", "0,10"},
       {"grid.csv"}},
      {"verify", {"verify"}, {"verify.txt"}},
      {"synth", {"synth", "--config", config.string()}, {"trace.csv"}},
      {"ode", {"ode"}, {"trajectory.csv"}},
  };
  bool ok = true;
  std::string detail;
  for (const auto& cmd : commands) {
    std::string first_stdout;
    for (int pass = 0; pass < 2; ++pass) {
      auto args = cmd.args;
      args.push_back("--out");
      args.push_back((root / (cmd.name + std::to_string(pass))).string());
      std::ostringstream out, err;
      const int code = cli::run(args, out, err);
      if (code != 0) {
        ok = false;
        detail += cmd.name + " exited " + std::to_string(code) + "; ";
      }
      if (pass == 0) first_stdout = out.str();
    }
    bool same = true;
    for (const auto& f : cmd.files) {
      const auto a = slurp(root / (cmd.name + "0") / f);
      const auto b = slurp(root / (cmd.name + "1") / f);
      same &= !a.empty() && a == b;
    }
    ok &= same;
    detail += cmd.name + (same ? " identical; " : " DIFFERS; ");
  }
  fs::remove_all(root);
  return {ok, detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "Shapley exactness", shapley_exactness},
      {2, "per-user gradient identity", per_user_identity},
      {3, "sampling quality", sampling_quality},
      {4, "closed-form gradients", closed_forms},
      {5, "smoothing limit", smoothing_limit},
      {6, "ODE stability", ode_stability},
      {7, "discrete-update invariances", update_invariances},
      {8, "choice-model moments", choice_moments},
      {9, "end-to-end desk-scale run", end_to_end},
      {10, "null scenarios", null_scenarios},
      {11, "determinism", determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << c.id << " ("
              << c.name << "): " << o.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed"
                              : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
