#include "tardis/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "tardis/choice_dynamics.hpp"
#include "tardis/error.hpp"
#include "tardis/rng.hpp"

namespace tardis {
namespace {

constexpr double kTight = 1e-9;

TpgPeriodTraffic random_instance(std::uint64_t seed, std::size_t users,
                                 std::size_t windows, double lo, double hi) {
  Rng rng = make_rng(seed);
  std::vector<double> rates(users * windows);
  for (double& r : rates) r = lo + (hi - lo) * uniform01(rng);
  return TpgPeriodTraffic(users, windows, std::move(rates));
}

double relative(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}

double max_relative(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 1e-300;
  for (double v : b) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const VerifyCheck& c) { return c.passed; });
}

VerifyReport run_verify(const VerifyOptions& options) {
  VerifyReport report;
  report.seed = options.seed;
  auto add = [&](std::string name, double deviation, double tolerance) {
    const bool ok = std::isfinite(deviation) && deviation <= tolerance;
    report.checks.push_back({std::move(name), ok, deviation, tolerance});
  };
  const auto& rank = options.oracle_rank;

  const auto traffic =
      random_instance(derive_seed(options.seed, 1), 4, 6, 1.0, 10.0);
  double peak = 0.0;
  for (double a : traffic.aggregate()) peak = std::max(peak, a);
  const std::size_t n = traffic.users();

  Percentile95Scheme exact_p95;
  exact_p95.rate = 2.0;
  exact_p95.variant = PercentileVariant::Exact;
  const std::vector<std::pair<std::string, PricingScheme>> schemes = {
      {"percentile95", exact_p95},
      {"linear", LinearScheme{3.0}},
      {"capped_link", CappedLinkScheme{1.25 * peak, 0.5}},
  };
  for (const auto& [label, scheme] : schemes) {
    const auto phi = shapley_values(scheme, traffic, 1, 0, SamplingMode::Exact);
    const double total = std::accumulate(phi.begin(), phi.end(), 0.0);
    add("shapley_efficiency_" + label,
        relative(total, period_cost(scheme, traffic)), kTight);
    add("shapley_oracle_agreement_" + label,
        max_relative(phi, oracle::shapley_values(scheme, traffic, rank)),
        kTight);
  }

  SamplingOptions exact;
  exact.mode = SamplingMode::Exact;
  for (auto variant : {PercentileVariant::Exact, PercentileVariant::ModifiedTop,
                       PercentileVariant::Smoothed}) {
    Percentile95Scheme scheme = exact_p95;
    scheme.variant = variant;
    scheme.sigma = 0.1 * percentile_95_rate(traffic.aggregate());
    const auto g = shapley_gradient(scheme, traffic, exact);
    add("gradient_oracle_agreement_" + to_string(variant),
        max_relative(g, oracle::percentile_gradient(scheme, traffic, rank)),
        kTight);
  }

  // Every arrangement with traffic ahead of the extra user credits one unit
  // of weight, so the gradient sums to r N / (N + 1); scaled by the billed
  // level it must reproduce the period cost.
  const auto g = shapley_gradient(exact_p95, traffic, exact);
  const double g_sum = std::accumulate(g.begin(), g.end(), 0.0);
  const double billed = oracle::percentile_rate(traffic.aggregate(), rank);
  add("gradient_sum_property",
      relative(g_sum * static_cast<double>(n + 1) / static_cast<double>(n) *
                   billed,
               period_cost(exact_p95, traffic)),
      kTight);

  double identity_gap = 0.0;
  for (std::size_t j = 0; j < traffic.windows(); ++j) {
    const auto per_user = per_user_gradient(exact_p95, traffic, j);
    const double expected =
        static_cast<double>(n + 1) / static_cast<double>(n) * g[j];
    identity_gap = std::max(
        identity_gap, std::abs(per_user.mean - expected) / exact_p95.rate);
  }
  add("per_user_gradient_identity", identity_gap, kTight);

  // Two choice sets over two capped links (kept above their free level by
  // background traffic) and one linear slot.
  FlowPriceModel model;
  model.grid = SlotGrid(3, 1);
  model.tpg_schemes = {CappedLinkScheme{2.0, 0.25},
                       CappedLinkScheme{2.0, 0.25}, LinearScheme{2.0}};
  model.background = {0.6, 0.6, 0.0};
  std::vector<ChoiceSet> sets = {{0, {0, 1}, 0.6}, {1, {1, 2}, 0.5}};
  IntegrateOptions integ;
  integ.record_every = 0;
  double worst_rise = 0.0;
  bool converged = false;
  try {
    const auto result =
        integrate(sets, {{0.6, 0.0}, {0.5, 0.0}},
                  make_price_function(model, sets), integ);
    for (std::size_t t = 1; t < result.v_series.size(); ++t) {
      worst_rise =
          std::max(worst_rise, result.v_series[t] - result.v_series[t - 1]);
    }
    converged = result.reached_equilibrium;
  } catch (const StepTooLarge&) {
    worst_rise = std::numeric_limits<double>::infinity();
  }
  add("lyapunov_descent", converged ? worst_rise : std::numeric_limits<double>::infinity(), 0.0);
  return report;
}

void write_verify_report(std::ostream& out, const VerifyReport& report) {
  out << "seed " << report.seed << '\n';
  char line[200];
  for (const auto& c : report.checks) {
    std::snprintf(line, sizeof line, "%s %s deviation=%.3e tolerance=%.1e\n",
                  c.passed ? "PASS" : "FAIL", c.name.c_str(), c.deviation,
                  c.tolerance);
    out << line;
  }
  out << (report.all_passed() ? "all checks passed" : "some checks failed")
      << '\n';
}

}  // namespace tardis
