#include "tardis/choice_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>
#include <variant>

#include "tardis/error.hpp"

namespace tardis {

SlotGrid::SlotGrid(std::size_t tpg_count, std::size_t windows)
    : tpg_count_(tpg_count), windows_(windows) {
  if (tpg_count == 0 || windows == 0) {
    throw ValidationError("slot grid needs at least one TPG and one window");
  }
}

std::size_t SlotGrid::id(std::size_t tpg, std::size_t window) const {
  if (tpg >= tpg_count_ || window >= windows_) {
    throw ValidationError("slot (" + std::to_string(tpg) + ", " +
                          std::to_string(window) + ") outside the grid");
  }
  return tpg * windows_ + window;
}

Slot SlotGrid::slot(std::size_t id) const {
  if (id >= size()) throw ValidationError("slot id outside the grid");
  return {id / windows_, id % windows_, id};
}

void ChoiceSet::validate(std::size_t slot_count) const {
  if (slots.empty()) throw ValidationError("choice set has no slots");
  if (!(demand >= 0.0) || !std::isfinite(demand)) {
    throw ValidationError("choice set demand must be finite and >= 0");
  }
  std::vector<std::size_t> sorted = slots;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ValidationError("choice set lists a slot twice");
  }
  if (slot_count != 0 && sorted.back() >= slot_count) {
    throw ValidationError("choice set names a slot outside the grid");
  }
}

SplitState SplitState::uniform(std::span<const ChoiceSet> sets) {
  SplitState state;
  state.rows.reserve(sets.size());
  for (const auto& set : sets) {
    state.rows.emplace_back(set.size(),
                            1.0 / static_cast<double>(set.size()));
  }
  return state;
}

void SplitState::validate(std::span<const ChoiceSet> sets,
                          double tolerance) const {
  if (rows.size() != sets.size()) {
    throw ValidationError("split state has the wrong number of rows");
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != sets[i].size()) {
      throw ValidationError("split row " + std::to_string(i) +
                            " does not match its choice set");
    }
    double sum = 0.0;
    for (double s : rows[i]) {
      if (!(s >= 0.0 && s <= 1.0)) {
        throw ValidationError("split row " + std::to_string(i) +
                              " leaves [0, 1]");
      }
      sum += s;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      throw ValidationError("split row " + std::to_string(i) +
                            " does not sum to one");
    }
  }
}

FlowMatrix SplitState::flows(std::span<const ChoiceSet> sets) const {
  FlowMatrix x = rows;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (double& v : x[i]) v *= sets[i].demand;
  }
  return x;
}

void StepSchedule::validate() const {
  if (!(final_scale > 0.0) || !(initial_scale >= final_scale)) {
    throw ValidationError("step schedule needs initial >= final > 0");
  }
  if (horizon == 0) throw ValidationError("step schedule horizon must be >= 1");
}

double StepSchedule::scale(std::size_t iteration) const {
  const double fraction =
      static_cast<double>(iteration) / static_cast<double>(horizon);
  return initial_scale * std::pow(final_scale / initial_scale, fraction);
}

std::vector<double> local_prices(const ChoiceSet& set,
                                 std::span<const double> prices) {
  std::vector<double> local(set.size());
  for (std::size_t j = 0; j < set.size(); ++j) {
    if (set.slots[j] >= prices.size()) {
      throw ValidationError("price vector shorter than the slot grid");
    }
    local[j] = prices[set.slots[j]];
  }
  return local;
}

void continuous_rhs_row(std::span<const double> x,
                        std::span<const double> prices, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t n = x.size();
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = j + 1; k < n; ++k) {
      const double gap = prices[j] - prices[k];
      // Positive moves flow from j to k, negative from k to j.
      double transfer = 0.0;
      if (gap > 0.0) {
        transfer = x[j] * gap;
      } else if (gap < 0.0) {
        transfer = x[k] * gap;
      }
      out[j] -= transfer;
      out[k] += transfer;
    }
  }
}

FlowMatrix continuous_rhs(std::span<const ChoiceSet> sets, const FlowMatrix& x,
                          std::span<const double> prices) {
  FlowMatrix rhs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto p = local_prices(sets[i], prices);
    rhs[i].assign(x[i].size(), 0.0);
    continuous_rhs_row(x[i], p, rhs[i]);
  }
  return rhs;
}

double lyapunov_row(std::span<const double> x, std::span<const double> prices) {
  double v = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] == 0.0) continue;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double gap = prices[j] - prices[k];
      if (gap > 0.0) v += x[j] * gap * gap;
    }
  }
  return v;
}

std::vector<double> lyapunov(std::span<const ChoiceSet> sets,
                             const FlowMatrix& x,
                             std::span<const double> prices) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    v[i] = lyapunov_row(x[i], local_prices(sets[i], prices));
  }
  return v;
}

bool is_equilibrium_row(std::span<const double> x,
                        std::span<const double> prices, double demand,
                        double epsilon) {
  double mean_abs = 0.0;
  for (double p : prices) mean_abs += std::abs(p);
  mean_abs /= static_cast<double>(prices.size());
  const double price_slack = epsilon * mean_abs;
  const double flow_slack = epsilon * demand;
  const double cheapest = *std::min_element(prices.begin(), prices.end());
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (prices[k] > cheapest + price_slack && x[k] > flow_slack) return false;
  }
  return true;
}

std::vector<bool> is_equilibrium(std::span<const ChoiceSet> sets,
                                 const FlowMatrix& x,
                                 std::span<const double> prices,
                                 double epsilon) {
  std::vector<bool> result(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    result[i] = is_equilibrium_row(x[i], local_prices(sets[i], prices),
                                   sets[i].demand, epsilon);
  }
  return result;
}

void FlowPriceModel::validate() const {
  if (tpg_schemes.size() != grid.tpg_count()) {
    throw ValidationError("flow price model needs one scheme per TPG");
  }
  if (!background.empty() && background.size() != grid.size()) {
    throw ValidationError("background flow must cover every slot");
  }
  for (const auto& scheme : tpg_schemes) {
    tardis::validate(scheme);
    if (const auto* p = std::get_if<Percentile95Scheme>(&scheme)) {
      if (p->variant != PercentileVariant::Smoothed || !(p->sigma > 0.0)) {
        throw ValidationError(
            "continuous dynamics need a continuous price: use linear, "
            "capped-link or smoothed percentile with sigma > 0");
      }
    }
  }
}

SlotPriceVector price_flows(const FlowPriceModel& model,
                            std::span<const ChoiceSet> sets,
                            const FlowMatrix& x) {
  const std::size_t windows = model.grid.windows();
  SlotPriceVector prices(model.grid.size(), 0.0);
  for (std::size_t g = 0; g < model.grid.tpg_count(); ++g) {
    const std::size_t base = g * windows;
    const auto& scheme = model.tpg_schemes[g];
    // One "user" per contributing choice set, plus the background.
    std::vector<double> rates;
    std::size_t users = 0;
    auto add_user = [&](const std::vector<double>& row) {
      rates.insert(rates.end(), row.begin(), row.end());
      ++users;
    };
    if (!model.background.empty()) {
      add_user(std::vector<double>(model.background.begin() + base,
                                   model.background.begin() + base + windows));
    }
    for (std::size_t i = 0; i < sets.size(); ++i) {
      std::vector<double> row(windows, 0.0);
      bool touches = false;
      for (std::size_t j = 0; j < sets[i].size(); ++j) {
        const std::size_t id = sets[i].slots[j];
        if (id >= base && id < base + windows) {
          row[id - base] += x[i][j];
          touches = true;
        }
      }
      if (touches) add_user(row);
    }
    if (users == 0) {
      add_user(std::vector<double>(windows, 0.0));
    }
    const bool per_user = std::holds_alternative<Percentile95Scheme>(scheme);
    if (!per_user && users > 1) {
      std::vector<double> total(windows, 0.0);
      for (std::size_t u = 0; u < users; ++u) {
        for (std::size_t w = 0; w < windows; ++w) {
          total[w] += rates[u * windows + w];
        }
      }
      rates = std::move(total);
      users = 1;
    }
    for (double& r : rates) r = std::max(r, 0.0);
    const TpgPeriodTraffic traffic(users, windows, std::move(rates));
    SamplingOptions exact;
    exact.mode = SamplingMode::Exact;
    const auto g_prices = shapley_gradient(scheme, traffic, exact);
    std::copy(g_prices.begin(), g_prices.end(),
              prices.begin() + static_cast<std::ptrdiff_t>(base));
  }
  return prices;
}

PriceFunction make_price_function(FlowPriceModel model,
                                  std::vector<ChoiceSet> sets) {
  model.validate();
  for (const auto& set : sets) set.validate(model.grid.size());
  return [model = std::move(model),
          sets = std::move(sets)](const FlowMatrix& x) {
    return price_flows(model, sets, x);
  };
}

namespace {

void restore_demand(const ChoiceSet& set, std::vector<double>& row) {
  double sum = 0.0;
  for (double& v : row) {
    v = std::max(v, 0.0);
    sum += v;
  }
  if (sum > 0.0) {
    const double factor = set.demand / sum;
    for (double& v : row) v *= factor;
  }
}

}  // namespace

IntegrateReport integrate(std::span<const ChoiceSet> sets, FlowMatrix x0,
                          const PriceFunction& price_fn,
                          const IntegrateOptions& options) {
  if (!(options.step > 0.0)) throw ValidationError("step must be positive");
  if (x0.size() != sets.size()) {
    throw ValidationError("initial flows do not match the choice sets");
  }
  for (std::size_t i = 0; i < sets.size(); ++i) {
    sets[i].validate();
    if (x0[i].size() != sets[i].size()) {
      throw ValidationError("initial flow row " + std::to_string(i) +
                            " does not match its choice set");
    }
    const double sum = std::accumulate(x0[i].begin(), x0[i].end(), 0.0);
    if (std::abs(sum - sets[i].demand) >
        1e-9 * std::max(1.0, sets[i].demand)) {
      throw ValidationError("initial flow row " + std::to_string(i) +
                            " does not carry its demand");
    }
  }

  IntegrateReport report;
  FlowMatrix x = std::move(x0);
  FlowMatrix rhs(x.size());
  double v_start = 0.0;
  double v_previous = 0.0;
  for (std::size_t step = 0;; ++step) {
    const auto prices = price_fn(x);
    for (double p : prices) {
      if (!std::isfinite(p)) {
        throw NonFiniteValue("price function returned a non-finite price at "
                             "step " + std::to_string(step));
      }
    }
    const auto v = lyapunov(sets, x, prices);
    const double v_sum = std::accumulate(v.begin(), v.end(), 0.0);
    if (step == 0) {
      v_start = v_sum;
    } else if (v_sum > v_previous + options.v_tolerance * v_start) {
      char buffer[160];
      std::snprintf(buffer, sizeof buffer,
                    "sum V rose from %.17g to %.17g at step %zu; "
                    "reduce the step size",
                    v_previous, v_sum, step);
      throw StepTooLarge(buffer);
    }
    report.v_series.push_back(v_sum);
    v_previous = v_sum;

    const auto eq = is_equilibrium(sets, x, prices, options.epsilon);
    const bool done = std::all_of(eq.begin(), eq.end(), [](bool b) { return b; });
    const bool last = done || step == options.max_steps;
    if (step == 0 || last ||
        (options.record_every != 0 && step % options.record_every == 0)) {
      report.trajectory.push_back({step, x, v});
    }
    if (last) {
      report.steps = step;
      report.reached_equilibrium = done;
      break;
    }

    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto p = local_prices(sets[i], prices);
      rhs[i].assign(x[i].size(), 0.0);
      continuous_rhs_row(x[i], p, rhs[i]);
      for (std::size_t j = 0; j < x[i].size(); ++j) {
        x[i][j] += options.step * rhs[i][j];
      }
      restore_demand(sets[i], x[i]);
    }
  }
  report.final_x = std::move(x);
  return report;
}

Descent discrete_descent(std::span<const double> s,
                         std::span<const double> prices) {
  Descent d;
  d.sdot.assign(s.size(), 0.0);
  continuous_rhs_row(s, prices, d.sdot);
  double sq = 0.0;
  for (double v : d.sdot) sq += v * v;
  d.norm = std::sqrt(sq);
  return d;
}

UpdateResult apply_update(std::span<const double> s, const Descent& descent,
                          const StepSchedule& schedule, std::size_t iteration) {
  if (iteration >= schedule.horizon) {
    throw ValidationError("iteration " + std::to_string(iteration) +
                          " is past the schedule horizon");
  }
  if (descent.sdot.size() != s.size()) {
    throw ValidationError("descent direction does not match the split row");
  }
  UpdateResult result;
  result.s.assign(s.begin(), s.end());
  if (!(descent.norm > 0.0)) {
    result.raw_sum = std::accumulate(s.begin(), s.end(), 0.0);
    return result;
  }
  double k = schedule.scale(iteration) / descent.norm;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double d = descent.sdot[j];
    if (d > 0.0 && s[j] + k * d > 1.0) k = (1.0 - s[j]) / d;
    if (d < 0.0 && s[j] + k * d < 0.0) k = s[j] / -d;
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    result.s[j] = s[j] + k * descent.sdot[j];
    sum += result.s[j];
  }
  result.raw_sum = sum;
  result.step = k;
  double clamped_sum = 0.0;
  for (double& v : result.s) {
    v = std::clamp(v, 0.0, 1.0);
    clamped_sum += v;
  }
  for (double& v : result.s) v /= clamped_sum;
  return result;
}

UpdateResult update_split_row(std::span<const double> s,
                              std::span<const double> prices,
                              const StepSchedule& schedule,
                              std::size_t iteration) {
  if (prices.size() != s.size()) {
    throw ValidationError("price row does not match the split row");
  }
  const double top = *std::max_element(prices.begin(), prices.end());
  std::vector<double> relative(prices.size(), 0.0);
  if (top > 0.0) {
    for (std::size_t j = 0; j < prices.size(); ++j) {
      relative[j] = prices[j] / top;
    }
  }
  return apply_update(s, discrete_descent(s, relative), schedule, iteration);
}

void write_trajectory_csv(std::ostream& out,
                          std::span<const ChoiceSet> sets,
                          std::span<const TrajectorySample> samples) {
  out << "step,choice_set,V,slot,s\n";
  char v_text[40];
  char s_text[40];
  for (const auto& sample : samples) {
    for (std::size_t i = 0; i < sample.x.size(); ++i) {
      const double v = i < sample.v.size() ? sample.v[i] : 0.0;
      std::snprintf(v_text, sizeof v_text, "%.17g", v);
      for (std::size_t j = 0; j < sample.x[i].size(); ++j) {
        std::snprintf(s_text, sizeof s_text, "%.17g", sample.x[i][j]);
        out << sample.step << ',' << i << ',' << v_text << ','
            << sets[i].slots[j] << ',' << s_text << '\n';
      }
    }
  }
}

}  // namespace tardis
