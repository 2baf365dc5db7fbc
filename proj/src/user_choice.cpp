#include "tardis/user_choice.hpp"

#include <algorithm>
#include <cmath>

#include "tardis/error.hpp"

namespace tardis {
namespace {

constexpr std::uint64_t kProfileStream = 0x70726f66696c65;  // "profile"

void require_fraction(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw ValidationError(std::string(name) + " must lie in [0, 1]");
  }
}

}  // namespace

std::string to_string(AssignmentPolicy policy) {
  return policy == AssignmentPolicy::AllOrNothing ? "all_or_nothing"
                                                  : "proportional";
}

AssignmentPolicy parse_assignment_policy(const std::string& name) {
  if (name == "all_or_nothing") return AssignmentPolicy::AllOrNothing;
  if (name == "proportional") return AssignmentPolicy::Proportional;
  throw ValidationError("unknown assignment policy '" + name + "'");
}

void ChoiceModelConfig::validate() const {
  require_fraction(n_t, "n_t");
  require_fraction(n_s, "n_s");
  require_fraction(mu_t, "mu_t");
  require_fraction(mu_s, "mu_s");
}

double shift_proportion(double mu, double r) {
  if (mu <= 0.0) return 0.0;
  if (mu >= 1.0) return 1.0;
  return std::pow(r, (1.0 - mu) / mu);
}

UserShiftProfile draw_profile(const ChoiceModelConfig& config,
                              std::size_t user, std::uint64_t seed) {
  UserShiftProfile profile;
  profile.user = user;
  profile.stream = derive_seed(seed, kProfileStream, user);
  Rng rng = make_rng(profile.stream);
  // Always consume four draws so each field has a fixed position in the
  // stream whatever the thresholds are.
  const double time_gate = uniform01(rng);
  const double space_gate = uniform01(rng);
  const double r_t = uniform_open01(rng);
  const double r_s = uniform_open01(rng);
  profile.can_time = time_gate < config.n_t;
  profile.can_space = space_gate < config.n_s;
  profile.p_t = profile.can_time ? shift_proportion(config.mu_t, r_t) : 0.0;
  profile.p_s = profile.can_space ? shift_proportion(config.mu_s, r_s) : 0.0;
  return profile;
}

std::vector<UserShiftProfile> draw_profiles(const ChoiceModelConfig& config,
                                            std::size_t users,
                                            std::uint64_t seed) {
  config.validate();
  std::vector<UserShiftProfile> profiles;
  profiles.reserve(users);
  for (std::size_t u = 0; u < users; ++u) {
    profiles.push_back(draw_profile(config, u, seed));
  }
  return profiles;
}

std::string to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::Immovable:
      return "immovable";
    case ShiftKind::SpaceOnly:
      return "space";
    case ShiftKind::TimeOnly:
      return "time";
    case ShiftKind::Both:
      return "both";
  }
  return "unknown";
}

Bytes ShiftPartition::of(ShiftKind kind) const {
  switch (kind) {
    case ShiftKind::Immovable:
      return immovable;
    case ShiftKind::SpaceOnly:
      return space_only;
    case ShiftKind::TimeOnly:
      return time_only;
    case ShiftKind::Both:
      return both;
  }
  return 0;
}

ShiftPartition partition_volume(Bytes volume, const UserShiftProfile& profile) {
  ShiftPartition part;
  if (volume <= 0) {
    part.immovable = volume;
    return part;
  }
  const double v = static_cast<double>(volume);
  const double pt = profile.p_t;
  const double ps = profile.p_s;
  part.both = static_cast<Bytes>(std::floor(v * pt * ps));
  part.time_only = static_cast<Bytes>(std::floor(v * pt * (1.0 - ps)));
  part.space_only = static_cast<Bytes>(std::floor(v * (1.0 - pt) * ps));
  Bytes moved = part.both + part.time_only + part.space_only;
  if (moved > volume) {
    // Rounding can overshoot by a byte when p_t or p_s is 1.
    const Bytes excess = moved - volume;
    Bytes* largest = &part.both;
    for (Bytes* c : {&part.time_only, &part.space_only}) {
      if (*c > *largest) largest = c;
    }
    *largest -= excess;
    moved = volume;
  }
  part.immovable = volume - moved;
  return part;
}

ChoiceSet build_choice_set(const SlotGrid& grid,
                           const ChoiceModelConfig& config, ShiftKind kind,
                           std::size_t origin_tpg, std::size_t origin_window) {
  const std::size_t windows = grid.windows();
  ChoiceSet set;
  const bool moves_space =
      kind == ShiftKind::SpaceOnly || kind == ShiftKind::Both;
  const bool moves_time = kind == ShiftKind::TimeOnly || kind == ShiftKind::Both;
  if (moves_time && config.max_delay_windows >= windows) {
    throw ValidationError("max_delay_windows must be below the " +
                          std::to_string(windows) + " windows of a day");
  }

  std::vector<std::size_t> tpgs{origin_tpg};
  if (moves_space) {
    if (config.tpgs_available.empty()) {
      tpgs.clear();
      for (std::size_t g = 0; g < grid.tpg_count(); ++g) tpgs.push_back(g);
    } else {
      for (std::size_t g : config.tpgs_available) {
        if (g >= grid.tpg_count()) {
          throw ValidationError("tpgs_available names TPG " +
                                std::to_string(g) + " outside the grid");
        }
        tpgs.push_back(g);
      }
      std::sort(tpgs.begin(), tpgs.end());
      tpgs.erase(std::unique(tpgs.begin(), tpgs.end()), tpgs.end());
    }
  }
  const std::size_t delays = moves_time ? config.max_delay_windows + 1 : 1;
  set.slots.reserve(delays * tpgs.size());
  for (std::size_t d = 0; d < delays; ++d) {
    const std::size_t window = (origin_window + d) % windows;
    for (std::size_t g : tpgs) set.slots.push_back(grid.id(g, window));
  }
  return set;
}

void assign_into(Bytes volume, std::span<const double> split,
                 AssignmentPolicy policy, Rng& rng, std::span<Bytes> out) {
  if (split.empty() || out.size() != split.size()) {
    throw ValidationError("assignment needs a nonempty split row");
  }
  std::fill(out.begin(), out.end(), 0);
  if (split.size() == 1) {
    out[0] = volume;
    return;
  }
  if (policy == AssignmentPolicy::AllOrNothing) {
    const double u = uniform01(rng);
    double cumulative = 0.0;
    std::size_t chosen = split.size() - 1;
    for (std::size_t j = 0; j < split.size(); ++j) {
      cumulative += split[j];
      if (u < cumulative) {
        chosen = j;
        break;
      }
    }
    // Never land on a zero-probability slot through rounding at the top.
    while (split[chosen] <= 0.0 && chosen > 0) --chosen;
    out[chosen] = volume;
    return;
  }
  const double v = static_cast<double>(volume);
  Bytes placed = 0;
  std::size_t largest = 0;
  for (std::size_t j = 0; j < split.size(); ++j) {
    out[j] = static_cast<Bytes>(std::floor(v * split[j]));
    placed += out[j];
    if (split[j] > split[largest]) largest = j;
  }
  out[largest] += volume - placed;
}

std::vector<Bytes> assign(Bytes volume, std::span<const double> split,
                          AssignmentPolicy policy, Rng& rng) {
  std::vector<Bytes> out(split.size());
  assign_into(volume, split, policy, rng, out);
  return out;
}

}  // namespace tardis
