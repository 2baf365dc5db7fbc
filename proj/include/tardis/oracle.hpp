#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tardis/pricing_engine.hpp"

/// Brute-force references for small instances. They share no code with the
/// pricing engine: percentiles come from a full sort and every average runs
/// over explicit permutations.
namespace tardis::oracle {

/// Maps a window count W to the 1-based rank (from the top) that is billed.
using RankRule = std::function<std::size_t(std::size_t)>;

/// floor(W / 20) + 1.
std::size_t default_rank(std::size_t windows);

double percentile_rate(std::span<const double> rates,
                       const RankRule& rank = default_rank);

/// Cost of the users flagged in `members`.
double coalition_cost(const PricingScheme& scheme,
                      const TpgPeriodTraffic& traffic,
                      const std::vector<bool>& members,
                      const RankRule& rank = default_rank);

/// Average marginal cost over all N! orderings.
std::vector<double> shapley_values(const PricingScheme& scheme,
                                   const TpgPeriodTraffic& traffic,
                                   const RankRule& rank = default_rank);

/// Average window weight over all (N+1)! arrangements of the users and one
/// fictitious user, times the rate.
std::vector<double> percentile_gradient(const Percentile95Scheme& scheme,
                                        const TpgPeriodTraffic& traffic,
                                        const RankRule& rank = default_rank);

}  // namespace tardis::oracle
