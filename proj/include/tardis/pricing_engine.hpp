#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace tardis {

/// Cost proportional to volume: `rate` money per byte.
struct LinearScheme {
  double rate = 1.0;
};

enum class PercentileVariant {
  /// Credits the windows sitting exactly at the billed percentile.
  Exact,
  /// Credits every window at or above the billed percentile, normalised by
  /// their count. Monotone in the window's own traffic.
  ModifiedTop,
  /// ModifiedTop with a Gaussian fall-off of width `sigma` below the
  /// percentile. Continuously differentiable.
  Smoothed,
};

/// 95th-percentile billing: `rate` money per unit of billed traffic rate.
struct Percentile95Scheme {
  double rate = 1.0;
  PercentileVariant variant = PercentileVariant::ModifiedTop;
  /// Rate units; only used by Smoothed.
  double sigma = 0.0;
  /// Sampled arrangements per gradient estimate.
  std::size_t sample_count = 1000;
};

/// Link of capacity `capacity` (a rate) that is free below
/// `free_fraction * capacity` and priced like an M/M/1 queue length above.
struct CappedLinkScheme {
  double capacity = 1.0;
  double free_fraction = 0.8;
};

using PricingScheme =
    std::variant<LinearScheme, Percentile95Scheme, CappedLinkScheme>;

/// Throws ValidationError if a parameter is out of range.
void validate(const PricingScheme& scheme);

std::string to_string(PercentileVariant variant);
PercentileVariant parse_percentile_variant(const std::string& name);

/// Per-user, per-window traffic rates of one pricing group over one billing
/// period, plus the per-window aggregate.
class TpgPeriodTraffic {
 public:
  TpgPeriodTraffic() = default;

  /// `rates` is laid out [user][window], in bytes per second.
  TpgPeriodTraffic(std::size_t users, std::size_t windows,
                   std::vector<double> rates, double window_length = 1.0);

  std::size_t users() const { return users_; }
  std::size_t windows() const { return windows_; }
  double window_length() const { return window_length_; }

  double rate(std::size_t user, std::size_t window) const {
    return rates_[user * windows_ + window];
  }
  std::span<const double> user_rates(std::size_t user) const {
    return {rates_.data() + user * windows_, windows_};
  }
  std::span<const double> aggregate() const { return aggregate_; }

  /// Per-window sum over `subset` (user indices), summed in the given order.
  std::vector<double> subset_aggregate(
      std::span<const std::size_t> subset) const;

 private:
  std::size_t users_ = 0;
  std::size_t windows_ = 0;
  double window_length_ = 1.0;
  std::vector<double> rates_;
  std::vector<double> aggregate_;
};

/// Price per slot (one entry per window of the pricing group).
using SlotPriceVector = std::vector<double>;

/// 1-based rank, counted from the largest, of the billed window among
/// `windows` windows: floor(0.05 W) + 1.
std::size_t percentile_rank(std::size_t windows);

/// The billed 95th-percentile rate of a per-window rate vector.
double percentile_95_rate(std::span<const double> window_rates);

/// v(S): what the group would pay for the traffic of `subset` alone.
/// Percentile schemes always bill the unmodified 95th percentile.
double period_cost(const PricingScheme& scheme, const TpgPeriodTraffic& traffic,
                   std::span<const std::size_t> subset);
/// v(N) for the whole user population.
double period_cost(const PricingScheme& scheme, const TpgPeriodTraffic& traffic);

/// Cost of a bare aggregate rate vector.
double aggregate_cost(const PricingScheme& scheme,
                      std::span<const double> aggregate, double window_length);

enum class SamplingMode {
  /// Enumerate exactly when the sample budget covers every arrangement.
  Auto,
  Exact,
  Sampled,
};

struct SamplingOptions {
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::Auto;
  /// Overrides the scheme's sample count when nonzero.
  std::size_t sample_count = 0;
};

/// Shapley value of every user's contribution to v(N). Exact (by subset
/// enumeration) when `sample_count >= N!` or the mode forces it, otherwise
/// the mean of `sample_count` random orderings.
std::vector<double> shapley_values(const PricingScheme& scheme,
                                   const TpgPeriodTraffic& traffic,
                                   std::size_t sample_count, std::uint64_t seed,
                                   SamplingMode mode = SamplingMode::Auto);

/// Price of adding an infinitesimal amount of traffic to each window: the
/// marginal cost rate of a fictitious extra user averaged over all
/// arrangements of the N real users and that user.
///
/// Linear and capped-link schemes have closed forms. The percentile schemes
/// average a per-arrangement window weight over the arrangements: exactly
/// when the sample budget covers all (N+1)! of them, otherwise over
/// `sample_count` random ones. An arrangement where no traffic precedes the
/// fictitious user credits no window.
SlotPriceVector shapley_gradient(const PricingScheme& scheme,
                                 const TpgPeriodTraffic& traffic,
                                 const SamplingOptions& options = {});

/// Weight that one arrangement puts on each window, given the aggregate rate
/// of the users preceding the fictitious user. Writes into `weights`.
void percentile_window_weights(PercentileVariant variant, double sigma,
                               std::span<const double> prefix_aggregate,
                               std::span<double> weights);

struct PerUserGradient {
  /// phi'_ij for each user i.
  std::vector<double> values;
  double mean = 0.0;
};

/// Per-user Shapley gradient for `window` by exact enumeration. Throws
/// ValidationError when the population exceeds `max_users`.
PerUserGradient per_user_gradient(const PricingScheme& scheme,
                                  const TpgPeriodTraffic& traffic,
                                  std::size_t window,
                                  std::size_t max_users = 8);

/// For each sigma (absolute rate units), the largest per-window gap between
/// the smoothed and the top-normalised percentile gradients, both evaluated
/// on one shared sample of arrangements.
std::vector<double> smoothed_convergence_check(
    const TpgPeriodTraffic& traffic, double rate,
    std::span<const double> sigmas, std::size_t sample_count,
    std::uint64_t seed);

/// One CSV row per (tpg, window): `tpg,window,price`.
void write_price_csv(std::ostream& out,
                     std::span<const SlotPriceVector> per_tpg_prices);

}  // namespace tardis
