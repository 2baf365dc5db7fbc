#include "tardis/pricing_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>

#include "tardis/error.hpp"
#include "tardis/rng.hpp"

namespace tardis {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr std::size_t kMaxExactUsers = 24;

// n! when it fits comfortably in a double's integer range, otherwise +inf.
double factorial(std::size_t n) {
  double value = 1.0;
  for (std::size_t k = 2; k <= n; ++k) value *= static_cast<double>(k);
  return n > 170 ? std::numeric_limits<double>::infinity() : value;
}

double binomial(std::size_t n, std::size_t k) {
  double value = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    value = value * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return value;
}

bool budget_covers(std::size_t sample_count, std::size_t arrangements_of) {
  if (arrangements_of > 20) return false;
  return static_cast<double>(sample_count) >= factorial(arrangements_of);
}

void require_enumerable(std::size_t users) {
  if (users > kMaxExactUsers) {
    throw ValidationError("exact enumeration limited to " +
                          std::to_string(kMaxExactUsers) + " users, got " +
                          std::to_string(users));
  }
}

double capped_link_cost(const CappedLinkScheme& s, double flow) {
  if (flow >= s.capacity) {
    throw CapacityExceeded("capacity exceeded: flow " + std::to_string(flow) +
                           " >= capacity " + std::to_string(s.capacity));
  }
  const double knee = s.free_fraction * s.capacity;
  if (flow < knee) return 0.0;
  return (flow - knee) / (s.capacity - flow);
}

double capped_link_price(const CappedLinkScheme& s, double flow) {
  if (flow >= s.capacity) {
    throw CapacityExceeded("capacity exceeded: flow " + std::to_string(flow) +
                           " >= capacity " + std::to_string(s.capacity));
  }
  if (flow < s.free_fraction * s.capacity) return 0.0;
  const double headroom = s.capacity - flow;
  return (1.0 - s.free_fraction) * s.capacity / (headroom * headroom);
}

// Calls `visit(prefix_aggregate)` for `samples` uniformly random
// arrangements of the N users plus one fictitious user; the aggregate is
// the traffic of the real users arriving before the fictitious one.
template <class Visit>
void for_each_sampled_prefix(const TpgPeriodTraffic& traffic,
                             std::size_t samples, std::uint64_t seed,
                             Visit&& visit) {
  const std::size_t n = traffic.users();
  const std::size_t w = traffic.windows();
  const auto total = traffic.aggregate();
  Rng rng = make_rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> prefix(w);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto position = static_cast<std::size_t>(uniform_index(rng, n + 1));
    // Summing the smaller side keeps the cost at most N/2 rows per sample.
    const bool use_complement = position > n / 2;
    const std::size_t picks = use_complement ? n - position : position;
    for (std::size_t i = 0; i < picks; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
      std::swap(order[i], order[j]);
    }
    std::fill(prefix.begin(), prefix.end(), 0.0);
    for (std::size_t i = 0; i < picks; ++i) {
      const auto row = traffic.user_rates(order[i]);
      for (std::size_t k = 0; k < w; ++k) prefix[k] += row[k];
    }
    if (use_complement) {
      for (std::size_t k = 0; k < w; ++k) {
        prefix[k] = std::max(0.0, total[k] - prefix[k]);
      }
    }
    visit(std::span<const double>(prefix));
  }
}

// Calls `visit(mask, aggregate)` for every subset of users.
template <class Visit>
void for_each_subset(const TpgPeriodTraffic& traffic, Visit&& visit) {
  const std::size_t n = traffic.users();
  require_enumerable(n);
  std::vector<double> aggregate(traffic.windows());
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    std::fill(aggregate.begin(), aggregate.end(), 0.0);
    for (std::size_t u = 0; u < n; ++u) {
      if (mask & (std::uint64_t{1} << u)) {
        const auto row = traffic.user_rates(u);
        for (std::size_t k = 0; k < aggregate.size(); ++k) {
          aggregate[k] += row[k];
        }
      }
    }
    visit(mask, std::span<const double>(aggregate));
  }
}

SlotPriceVector percentile_gradient(const Percentile95Scheme& scheme,
                                    const TpgPeriodTraffic& traffic,
                                    const SamplingOptions& options) {
  const std::size_t n = traffic.users();
  const std::size_t w = traffic.windows();
  const std::size_t samples =
      options.sample_count ? options.sample_count : scheme.sample_count;
  const bool exact =
      options.mode == SamplingMode::Exact ||
      (options.mode == SamplingMode::Auto && budget_covers(samples, n + 1));

  std::vector<double> accum(w, 0.0);
  std::vector<double> weights(w);
  if (exact) {
    // An arrangement whose prefix is the subset P occurs |P|!(N-|P|)! times
    // among the (N+1)! arrangements.
    std::vector<double> size_weight(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
      size_weight[k] = 1.0 / (static_cast<double>(n + 1) * binomial(n, k));
    }
    for_each_subset(traffic, [&](std::uint64_t mask,
                                 std::span<const double> aggregate) {
      percentile_window_weights(scheme.variant, scheme.sigma, aggregate,
                                weights);
      const double p = size_weight[static_cast<std::size_t>(
          std::popcount(mask))];
      for (std::size_t k = 0; k < w; ++k) accum[k] += p * weights[k];
    });
  } else {
    if (samples == 0) throw ValidationError("sample_count must be >= 1");
    for_each_sampled_prefix(traffic, samples, options.seed,
                            [&](std::span<const double> prefix) {
                              percentile_window_weights(scheme.variant,
                                                        scheme.sigma, prefix,
                                                        weights);
                              for (std::size_t k = 0; k < w; ++k) {
                                accum[k] += weights[k];
                              }
                            });
    for (double& a : accum) a /= static_cast<double>(samples);
  }

  SlotPriceVector prices(w);
  for (std::size_t k = 0; k < w; ++k) {
    prices[k] = std::max(0.0, scheme.rate * accum[k]);
  }
  return prices;
}

}  // namespace

void validate(const PricingScheme& scheme) {
  std::visit(
      Overloaded{
          [](const LinearScheme& s) {
            if (!(s.rate >= 0.0) || !std::isfinite(s.rate)) {
              throw ValidationError("linear rate must be finite and >= 0");
            }
          },
          [](const Percentile95Scheme& s) {
            if (!(s.rate >= 0.0) || !std::isfinite(s.rate)) {
              throw ValidationError("percentile rate must be finite and >= 0");
            }
            if (!(s.sigma >= 0.0)) {
              throw ValidationError("sigma must be >= 0");
            }
            if (s.sample_count < 1) {
              throw ValidationError("sample_count must be >= 1");
            }
          },
          [](const CappedLinkScheme& s) {
            if (!(s.capacity > 0.0)) {
              throw ValidationError("link capacity must be positive");
            }
            if (!(s.free_fraction > 0.0 && s.free_fraction < 1.0)) {
              throw ValidationError("free_fraction must lie in (0, 1)");
            }
          },
      },
      scheme);
}

std::string to_string(PercentileVariant variant) {
  switch (variant) {
    case PercentileVariant::Exact:
      return "exact";
    case PercentileVariant::ModifiedTop:
      return "modified_top";
    case PercentileVariant::Smoothed:
      return "smoothed";
  }
  return "unknown";
}

PercentileVariant parse_percentile_variant(const std::string& name) {
  if (name == "exact") return PercentileVariant::Exact;
  if (name == "modified_top") return PercentileVariant::ModifiedTop;
  if (name == "smoothed") return PercentileVariant::Smoothed;
  throw ValidationError("unknown percentile variant '" + name + "'");
}

TpgPeriodTraffic::TpgPeriodTraffic(std::size_t users, std::size_t windows,
                                   std::vector<double> rates,
                                   double window_length)
    : users_(users),
      windows_(windows),
      window_length_(window_length),
      rates_(std::move(rates)),
      aggregate_(windows, 0.0) {
  if (rates_.size() != users * windows) {
    throw ValidationError("rate count does not match users x windows");
  }
  if (!(window_length > 0.0)) {
    throw ValidationError("window length must be positive");
  }
  for (std::size_t u = 0; u < users; ++u) {
    for (std::size_t k = 0; k < windows; ++k) {
      const double r = rates_[u * windows + k];
      if (!(r >= 0.0) || !std::isfinite(r)) {
        throw ValidationError("traffic rates must be finite and >= 0");
      }
      aggregate_[k] += r;
    }
  }
}

std::vector<double> TpgPeriodTraffic::subset_aggregate(
    std::span<const std::size_t> subset) const {
  std::vector<double> sum(windows_, 0.0);
  for (std::size_t u : subset) {
    if (u >= users_) throw ValidationError("subset names an unknown user");
    const auto row = user_rates(u);
    for (std::size_t k = 0; k < windows_; ++k) sum[k] += row[k];
  }
  return sum;
}

std::size_t percentile_rank(std::size_t windows) { return windows / 20 + 1; }

double percentile_95_rate(std::span<const double> window_rates) {
  if (window_rates.empty()) {
    throw ValidationError("percentile of an empty rate vector");
  }
  std::vector<double> copy(window_rates.begin(), window_rates.end());
  const std::size_t rank = percentile_rank(copy.size());
  auto nth = copy.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(copy.begin(), nth, copy.end(), std::greater<>());
  return *nth;
}

double aggregate_cost(const PricingScheme& scheme,
                      std::span<const double> aggregate, double window_length) {
  return std::visit(
      Overloaded{
          [&](const LinearScheme& s) {
            double volume = 0.0;
            for (double f : aggregate) volume += f * window_length;
            return s.rate * volume;
          },
          [&](const Percentile95Scheme& s) {
            return s.rate * percentile_95_rate(aggregate);
          },
          [&](const CappedLinkScheme& s) {
            double cost = 0.0;
            for (double f : aggregate) cost += capped_link_cost(s, f);
            return cost * window_length;
          },
      },
      scheme);
}

double period_cost(const PricingScheme& scheme, const TpgPeriodTraffic& traffic,
                   std::span<const std::size_t> subset) {
  if (subset.empty()) return 0.0;
  return aggregate_cost(scheme, traffic.subset_aggregate(subset),
                        traffic.window_length());
}

double period_cost(const PricingScheme& scheme,
                   const TpgPeriodTraffic& traffic) {
  if (traffic.users() == 0) return 0.0;
  return aggregate_cost(scheme, traffic.aggregate(), traffic.window_length());
}

std::vector<double> shapley_values(const PricingScheme& scheme,
                                   const TpgPeriodTraffic& traffic,
                                   std::size_t sample_count, std::uint64_t seed,
                                   SamplingMode mode) {
  validate(scheme);
  const std::size_t n = traffic.users();
  if (n == 0) throw ValidationError("shapley_values needs at least one user");
  const double window_length = traffic.window_length();
  auto cost_of = [&](std::span<const double> aggregate) {
    return aggregate_cost(scheme, aggregate, window_length);
  };

  std::vector<double> phi(n, 0.0);
  const bool exact = mode == SamplingMode::Exact ||
                     (mode == SamplingMode::Auto && budget_covers(sample_count, n));
  if (exact) {
    std::vector<double> value(std::size_t{1} << n);
    for_each_subset(traffic, [&](std::uint64_t mask,
                                 std::span<const double> aggregate) {
      value[mask] = mask == 0 ? 0.0 : cost_of(aggregate);
    });
    // Weight of a coalition S not containing i: |S|!(N-|S|-1)!/N!.
    std::vector<double> size_weight(n);
    for (std::size_t k = 0; k < n; ++k) {
      size_weight[k] = 1.0 / (static_cast<double>(n) * binomial(n - 1, k));
    }
    for (std::uint64_t mask = 0; mask < value.size(); ++mask) {
      const auto k = static_cast<std::size_t>(std::popcount(mask));
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t bit = std::uint64_t{1} << i;
        if (mask & bit) continue;
        phi[i] += size_weight[k] * (value[mask | bit] - value[mask]);
      }
    }
    return phi;
  }

  if (sample_count == 0) throw ValidationError("sample_count must be >= 1");
  Rng rng = make_rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> prefix(traffic.windows());
  for (std::size_t s = 0; s < sample_count; ++s) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
      std::swap(order[i], order[j]);
    }
    std::fill(prefix.begin(), prefix.end(), 0.0);
    double previous = 0.0;
    for (std::size_t u : order) {
      const auto row = traffic.user_rates(u);
      for (std::size_t k = 0; k < prefix.size(); ++k) prefix[k] += row[k];
      const double current = cost_of(prefix);
      phi[u] += current - previous;
      previous = current;
    }
  }
  for (double& v : phi) v /= static_cast<double>(sample_count);
  return phi;
}

void percentile_window_weights(PercentileVariant variant, double sigma,
                               std::span<const double> prefix_aggregate,
                               std::span<double> weights) {
  const std::size_t w = prefix_aggregate.size();
  const double peak =
      *std::max_element(prefix_aggregate.begin(), prefix_aggregate.end());
  if (!(peak > 0.0)) {
    // No traffic ahead of the fictitious user: nothing is billed yet.
    std::fill(weights.begin(), weights.end(), 0.0);
    return;
  }
  const double level = percentile_95_rate(prefix_aggregate);
  switch (variant) {
    case PercentileVariant::Exact:
      for (std::size_t k = 0; k < w; ++k) {
        weights[k] = prefix_aggregate[k] == level ? 1.0 : 0.0;
      }
      return;
    case PercentileVariant::ModifiedTop:
    case PercentileVariant::Smoothed: {
      const bool gaussian =
          variant == PercentileVariant::Smoothed && sigma > 0.0;
      const double inv_sigma2 = gaussian ? 1.0 / (sigma * sigma) : 0.0;
      double total = 0.0;
      for (std::size_t k = 0; k < w; ++k) {
        const double t = prefix_aggregate[k];
        double a;
        if (t >= level) {
          a = 1.0;
        } else if (gaussian) {
          const double gap = t - level;
          a = std::exp(-gap * gap * inv_sigma2);
        } else {
          a = 0.0;
        }
        weights[k] = a;
        total += a;
      }
      for (std::size_t k = 0; k < w; ++k) weights[k] /= total;
      return;
    }
  }
}

SlotPriceVector shapley_gradient(const PricingScheme& scheme,
                                 const TpgPeriodTraffic& traffic,
                                 const SamplingOptions& options) {
  validate(scheme);
  if (traffic.windows() == 0) {
    throw ValidationError("shapley_gradient needs at least one window");
  }
  return std::visit(
      Overloaded{
          [&](const LinearScheme& s) {
            return SlotPriceVector(traffic.windows(), s.rate);
          },
          [&](const CappedLinkScheme& s) {
            SlotPriceVector prices(traffic.windows());
            const auto aggregate = traffic.aggregate();
            for (std::size_t k = 0; k < prices.size(); ++k) {
              prices[k] = capped_link_price(s, aggregate[k]);
            }
            return prices;
          },
          [&](const Percentile95Scheme& s) {
            if (traffic.users() == 0) {
              throw ValidationError(
                  "percentile gradient needs at least one user");
            }
            return percentile_gradient(s, traffic, options);
          },
      },
      scheme);
}

PerUserGradient per_user_gradient(const PricingScheme& scheme,
                                  const TpgPeriodTraffic& traffic,
                                  std::size_t window, std::size_t max_users) {
  validate(scheme);
  const std::size_t n = traffic.users();
  if (n == 0) throw ValidationError("per_user_gradient needs users");
  if (n > max_users) {
    throw ValidationError("per_user_gradient enumerates all orderings; " +
                          std::to_string(n) + " users exceeds the bound of " +
                          std::to_string(max_users));
  }
  if (window >= traffic.windows()) {
    throw ValidationError("window out of range");
  }

  PerUserGradient result;
  result.values.assign(n, 0.0);
  if (const auto* p = std::get_if<Percentile95Scheme>(&scheme)) {
    // phi'_ij averages the window weight over every ordering of the real
    // users, evaluated on the coalition that ends with user i.
    std::vector<double> size_weight(n + 1, 0.0);
    for (std::size_t k = 1; k <= n; ++k) {
      size_weight[k] = 1.0 / (static_cast<double>(n) * binomial(n - 1, k - 1));
    }
    std::vector<double> weights(traffic.windows());
    for_each_subset(traffic, [&](std::uint64_t mask,
                                 std::span<const double> aggregate) {
      if (mask == 0) return;
      percentile_window_weights(p->variant, p->sigma, aggregate, weights);
      const double g = size_weight[static_cast<std::size_t>(
                           std::popcount(mask))] *
                       weights[window];
      if (g == 0.0) return;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask & (std::uint64_t{1} << i)) result.values[i] += g;
      }
    });
    for (double& v : result.values) v *= p->rate;
  } else {
    // Linear and capped-link costs depend on the total flow alone, so an
    // infinitesimal addition is priced the same whoever carries it.
    const double g = shapley_gradient(scheme, traffic)[window];
    std::fill(result.values.begin(), result.values.end(), g);
  }
  result.mean =
      std::accumulate(result.values.begin(), result.values.end(), 0.0) /
      static_cast<double>(n);
  return result;
}

std::vector<double> smoothed_convergence_check(
    const TpgPeriodTraffic& traffic, double rate,
    std::span<const double> sigmas, std::size_t sample_count,
    std::uint64_t seed) {
  if (traffic.users() == 0 || traffic.windows() == 0) {
    throw ValidationError("smoothed_convergence_check needs traffic");
  }
  if (sample_count == 0) throw ValidationError("sample_count must be >= 1");
  const std::size_t w = traffic.windows();
  std::vector<double> prefixes;
  prefixes.reserve(sample_count * w);
  for_each_sampled_prefix(traffic, sample_count, seed,
                          [&](std::span<const double> prefix) {
                            prefixes.insert(prefixes.end(), prefix.begin(),
                                            prefix.end());
                          });

  auto evaluate = [&](PercentileVariant variant, double sigma) {
    std::vector<double> accum(w, 0.0);
    std::vector<double> weights(w);
    for (std::size_t s = 0; s < sample_count; ++s) {
      percentile_window_weights(
          variant, sigma,
          std::span<const double>(prefixes.data() + s * w, w), weights);
      for (std::size_t k = 0; k < w; ++k) accum[k] += weights[k];
    }
    for (double& a : accum) a *= rate / static_cast<double>(sample_count);
    return accum;
  };

  const auto reference = evaluate(PercentileVariant::ModifiedTop, 0.0);
  std::vector<double> gaps;
  gaps.reserve(sigmas.size());
  for (double sigma : sigmas) {
    if (!(sigma >= 0.0)) throw ValidationError("sigma must be >= 0");
    const auto smoothed = evaluate(PercentileVariant::Smoothed, sigma);
    double gap = 0.0;
    for (std::size_t k = 0; k < w; ++k) {
      gap = std::max(gap, std::abs(smoothed[k] - reference[k]));
    }
    gaps.push_back(gap);
  }
  return gaps;
}

void write_price_csv(std::ostream& out,
                     std::span<const SlotPriceVector> per_tpg_prices) {
  out << "tpg,window,price\n";
  char buffer[64];
  for (std::size_t g = 0; g < per_tpg_prices.size(); ++g) {
    for (std::size_t k = 0; k < per_tpg_prices[g].size(); ++k) {
      std::snprintf(buffer, sizeof buffer, "%.17g", per_tpg_prices[g][k]);
      out << g << ',' << k << ',' << buffer << '\n';
    }
  }
}

}  // namespace tardis
