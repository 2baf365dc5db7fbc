#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "tardis/pricing_engine.hpp"

namespace tardis {

struct Slot {
  std::size_t tpg = 0;
  std::size_t window = 0;
  std::size_t id = 0;
};

/// Every (tpg, window) slot of one billing period, densely numbered
/// tpg-major: id = tpg * windows + window.
class SlotGrid {
 public:
  SlotGrid() = default;
  SlotGrid(std::size_t tpg_count, std::size_t windows);

  std::size_t tpg_count() const { return tpg_count_; }
  std::size_t windows() const { return windows_; }
  std::size_t size() const { return tpg_count_ * windows_; }

  std::size_t id(std::size_t tpg, std::size_t window) const;
  Slot slot(std::size_t id) const;

 private:
  std::size_t tpg_count_ = 0;
  std::size_t windows_ = 0;
};

/// A unit of demand and the slots it may occupy.
struct ChoiceSet {
  std::size_t id = 0;
  /// Slot ids, in a fixed order shared with the split row.
  std::vector<std::size_t> slots;
  /// Demand d_i in bytes.
  double demand = 0.0;

  std::size_t size() const { return slots.size(); }
  /// Throws ValidationError when empty, with duplicates, negative demand, or
  /// a slot id >= `slot_count` (when nonzero).
  void validate(std::size_t slot_count = 0) const;
};

/// Row i holds choice set i's flows (or proportions), aligned with its slots.
using FlowMatrix = std::vector<std::vector<double>>;

/// Splitting proportions s_ij; each row sums to one.
struct SplitState {
  FlowMatrix rows;

  static SplitState uniform(std::span<const ChoiceSet> sets);
  /// Throws ValidationError when a row is misaligned, leaves [0, 1], or does
  /// not sum to one within `tolerance`.
  void validate(std::span<const ChoiceSet> sets, double tolerance = 1e-9) const;
  /// X_ij = d_i * s_ij.
  FlowMatrix flows(std::span<const ChoiceSet> sets) const;
};

/// Step scale decaying geometrically from `initial_scale` at t = 0 to
/// `final_scale` at t = horizon.
struct StepSchedule {
  double initial_scale = 0.1;
  double final_scale = 0.001;
  std::size_t horizon = 500;

  void validate() const;
  double scale(std::size_t iteration) const;
};

/// Prices of the slots of one choice set, gathered from a grid-wide vector.
std::vector<double> local_prices(const ChoiceSet& set,
                                 std::span<const double> prices);

/// Xdot_ij = sum_k [X_ik (p_k - p_j)+ - X_ij (p_j - p_k)+] over one row.
/// Each pairwise transfer is added to one slot and removed from the other.
void continuous_rhs_row(std::span<const double> x,
                        std::span<const double> prices, std::span<double> out);
FlowMatrix continuous_rhs(std::span<const ChoiceSet> sets, const FlowMatrix& x,
                          std::span<const double> prices);

/// V(x_i) = sum_{j,k} X_ij (p_j - p_k)+^2 for one row.
double lyapunov_row(std::span<const double> x, std::span<const double> prices);
std::vector<double> lyapunov(std::span<const ChoiceSet> sets,
                             const FlowMatrix& x,
                             std::span<const double> prices);

/// Choice set i is at equilibrium when p_k > p_j + eps * mean|p| forces
/// X_ik <= eps * d_i for all j, k in the set; the mean runs over the set.
bool is_equilibrium_row(std::span<const double> x,
                        std::span<const double> prices, double demand,
                        double epsilon);
std::vector<bool> is_equilibrium(std::span<const ChoiceSet> sets,
                                 const FlowMatrix& x,
                                 std::span<const double> prices,
                                 double epsilon = 1e-6);

/// Grid-wide slot prices as a function of the current flows.
using PriceFunction = std::function<SlotPriceVector(const FlowMatrix&)>;

/// Prices driven by the flow that the choice sets put on each slot, plus a
/// fixed background flow. Each TPG has its own scheme: Linear and
/// CappedLink price each slot from its total flow; a Smoothed percentile
/// scheme prices a TPG's windows with the exact Shapley gradient, treating
/// every choice set (and the background) as one user.
struct FlowPriceModel {
  SlotGrid grid;
  std::vector<PricingScheme> tpg_schemes;
  /// Per-slot flow that no choice set controls; empty means zero.
  std::vector<double> background;

  /// Rejects percentile variants other than Smoothed with sigma > 0.
  void validate() const;
};

SlotPriceVector price_flows(const FlowPriceModel& model,
                            std::span<const ChoiceSet> sets,
                            const FlowMatrix& x);
PriceFunction make_price_function(FlowPriceModel model,
                                  std::vector<ChoiceSet> sets);

struct IntegrateOptions {
  double step = 1e-3;
  std::size_t max_steps = 1'000'000;
  double epsilon = 1e-6;
  /// Allowed step-to-step rise of sum V, relative to its starting value.
  double v_tolerance = 1e-12;
  /// Keep every n-th state in the trajectory (0 keeps the endpoints only).
  std::size_t record_every = 1000;
};

struct TrajectorySample {
  std::size_t step = 0;
  FlowMatrix x;
  std::vector<double> v;
};

struct IntegrateReport {
  std::vector<TrajectorySample> trajectory;
  /// Sum of V over choice sets before each step and after the last.
  std::vector<double> v_series;
  std::size_t steps = 0;
  bool reached_equilibrium = false;
  FlowMatrix final_x;
};

/// Explicit Euler integration of Xdot = rhs(X, price_fn(X)) until every
/// choice set is at epsilon-equilibrium or `max_steps` is used up. Each step
/// clamps negative flows to zero and rescales rows back to their demand.
/// Throws NonFiniteValue on a non-finite price and StepTooLarge when sum V
/// rises by more than the tolerance.
IntegrateReport integrate(std::span<const ChoiceSet> sets, FlowMatrix x0,
                          const PriceFunction& price_fn,
                          const IntegrateOptions& options = {});

struct Descent {
  std::vector<double> sdot;
  double norm = 0.0;
};

/// sdot_ij = sum_k [s_ik (p_k - p_j)+ - s_ij (p_j - p_k)+] and its
/// Euclidean norm.
Descent discrete_descent(std::span<const double> s,
                         std::span<const double> prices);

struct UpdateResult {
  std::vector<double> s;
  /// Row sum after the step, before clamping and renormalisation.
  double raw_sum = 1.0;
  /// Step length k_i actually taken.
  double step = 0.0;
};

/// s + k sdot with k = scale(t) / norm, shortened so no entry leaves
/// [0, 1], then clamped and renormalised.
UpdateResult apply_update(std::span<const double> s, const Descent& descent,
                          const StepSchedule& schedule, std::size_t iteration);

/// One update of a split row from raw slot prices. Prices are first divided
/// by their maximum over the set, so multiplying them all by a constant
/// leaves the result unchanged bit for bit whenever the scaled prices are
/// exactly representable.
UpdateResult update_split_row(std::span<const double> s,
                              std::span<const double> prices,
                              const StepSchedule& schedule,
                              std::size_t iteration);

/// `step,choice_set,V,slot,s` rows; `s` holds the flow or proportion.
void write_trajectory_csv(std::ostream& out,
                          std::span<const ChoiceSet> sets,
                          std::span<const TrajectorySample> samples);

}  // namespace tardis
