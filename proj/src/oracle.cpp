#include "tardis/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tardis/error.hpp"

namespace tardis::oracle {
namespace {

constexpr std::size_t kMaxUsers = 9;

void require_small(std::size_t users) {
  if (users == 0 || users > kMaxUsers) {
    throw ValidationError("oracle enumerates permutations; needs 1..9 users");
  }
}

std::vector<double> sum_rows(const TpgPeriodTraffic& traffic,
                             const std::vector<bool>& members) {
  std::vector<double> total(traffic.windows(), 0.0);
  for (std::size_t u = 0; u < traffic.users(); ++u) {
    if (!members[u]) continue;
    for (std::size_t w = 0; w < traffic.windows(); ++w) {
      total[w] += traffic.rate(u, w);
    }
  }
  return total;
}

}  // namespace

std::size_t default_rank(std::size_t windows) { return windows / 20 + 1; }

double percentile_rate(std::span<const double> rates, const RankRule& rank) {
  std::vector<double> sorted(rates.begin(), rates.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t r = std::clamp<std::size_t>(rank(sorted.size()), 1,
                                                sorted.size());
  return sorted[r - 1];
}

double coalition_cost(const PricingScheme& scheme,
                      const TpgPeriodTraffic& traffic,
                      const std::vector<bool>& members, const RankRule& rank) {
  if (std::none_of(members.begin(), members.end(), [](bool b) { return b; })) {
    return 0.0;
  }
  const auto flow = sum_rows(traffic, members);
  if (const auto* s = std::get_if<LinearScheme>(&scheme)) {
    double bytes = 0.0;
    for (double f : flow) bytes += f * traffic.window_length();
    return s->rate * bytes;
  }
  if (const auto* s = std::get_if<Percentile95Scheme>(&scheme)) {
    return s->rate * percentile_rate(flow, rank);
  }
  const auto& c = std::get<CappedLinkScheme>(scheme);
  double cost = 0.0;
  for (double f : flow) {
    if (f >= c.capacity) throw CapacityExceeded("oracle: capacity exceeded");
    if (f >= c.free_fraction * c.capacity) {
      cost += (f - c.free_fraction * c.capacity) / (c.capacity - f);
    }
  }
  return cost * traffic.window_length();
}

std::vector<double> shapley_values(const PricingScheme& scheme,
                                   const TpgPeriodTraffic& traffic,
                                   const RankRule& rank) {
  const std::size_t n = traffic.users();
  require_small(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> phi(n, 0.0);
  std::size_t count = 0;
  do {
    std::vector<bool> members(n, false);
    double before = 0.0;
    for (std::size_t u : order) {
      members[u] = true;
      const double after = coalition_cost(scheme, traffic, members, rank);
      phi[u] += after - before;
      before = after;
    }
    ++count;
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& v : phi) v /= static_cast<double>(count);
  return phi;
}

std::vector<double> percentile_gradient(const Percentile95Scheme& scheme,
                                        const TpgPeriodTraffic& traffic,
                                        const RankRule& rank) {
  const std::size_t n = traffic.users();
  const std::size_t w = traffic.windows();
  require_small(n);
  // Index n stands for the fictitious user.
  std::vector<std::size_t> order(n + 1);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> total(w, 0.0);
  std::size_t count = 0;
  do {
    std::vector<bool> members(n, false);
    for (std::size_t u : order) {
      if (u == n) break;
      members[u] = true;
    }
    ++count;
    const auto flow = sum_rows(traffic, members);
    if (std::all_of(flow.begin(), flow.end(),
                    [](double f) { return f == 0.0; })) {
      continue;
    }
    const double level = percentile_rate(flow, rank);
    std::vector<double> weight(w, 0.0);
    switch (scheme.variant) {
      case PercentileVariant::Exact:
        for (std::size_t j = 0; j < w; ++j) {
          if (flow[j] == level) weight[j] = 1.0;
        }
        break;
      case PercentileVariant::ModifiedTop:
      case PercentileVariant::Smoothed: {
        double norm = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
          if (flow[j] >= level) {
            weight[j] = 1.0;
          } else if (scheme.variant == PercentileVariant::Smoothed &&
                     scheme.sigma > 0.0) {
            const double z = (flow[j] - level) / scheme.sigma;
            weight[j] = std::exp(-z * z);
          }
          norm += weight[j];
        }
        for (double& x : weight) x /= norm;
        break;
      }
    }
    for (std::size_t j = 0; j < w; ++j) total[j] += weight[j];
  } while (std::next_permutation(order.begin(), order.end()));
  for (double& t : total) t = scheme.rate * t / static_cast<double>(count);
  return total;
}

}  // namespace tardis::oracle
