#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tardis/choice_dynamics.hpp"
#include "tardis/rng.hpp"
#include "tardis/traffic_model.hpp"

namespace tardis {

enum class AssignmentPolicy {
  /// The whole volume goes to one slot drawn with probability s_ij.
  AllOrNothing,
  /// Each slot receives volume * s_ij.
  Proportional,
};

std::string to_string(AssignmentPolicy policy);
AssignmentPolicy parse_assignment_policy(const std::string& name);

struct ChoiceModelConfig {
  /// Fraction of users eligible for time shifting.
  double n_t = 0.0;
  /// Fraction of users eligible for space shifting.
  double n_s = 0.0;
  /// Mean time-shifted proportion among eligible users.
  double mu_t = 0.0;
  /// Mean space-shifted proportion among eligible users.
  double mu_s = 0.0;
  /// Longest delay, in windows; a delay never reaches a full day.
  std::size_t max_delay_windows = 18;
  /// TPGs a space shift may land on; empty means all of them.
  std::vector<std::size_t> tpgs_available;
  AssignmentPolicy policy = AssignmentPolicy::Proportional;

  void validate() const;
};

struct UserShiftProfile {
  std::size_t user = 0;
  bool can_time = false;
  bool can_space = false;
  double p_t = 0.0;
  double p_s = 0.0;
  /// Seed of the generator the profile was drawn from.
  std::uint64_t stream = 0;
};

/// R^((1 - mu) / mu) for R in (0, 1); its mean over uniform R is mu.
/// mu = 0 gives 0 and mu = 1 gives 1.
double shift_proportion(double mu, double r);

/// The profile of `user` depends only on (config, seed, user).
UserShiftProfile draw_profile(const ChoiceModelConfig& config,
                              std::size_t user, std::uint64_t seed);
std::vector<UserShiftProfile> draw_profiles(const ChoiceModelConfig& config,
                                            std::size_t users,
                                            std::uint64_t seed);

enum class ShiftKind { Immovable, SpaceOnly, TimeOnly, Both };

inline constexpr ShiftKind kShiftKinds[] = {
    ShiftKind::Immovable, ShiftKind::SpaceOnly, ShiftKind::TimeOnly,
    ShiftKind::Both};

std::string to_string(ShiftKind kind);

/// Bytes of one cell in each shift category: p_t p_s may move in both
/// dimensions, p_t (1 - p_s) in time only, (1 - p_t) p_s in space only.
/// Each share is rounded down; whatever remains is immovable.
struct ShiftPartition {
  Bytes immovable = 0;
  Bytes space_only = 0;
  Bytes time_only = 0;
  Bytes both = 0;

  Bytes of(ShiftKind kind) const;
};

ShiftPartition partition_volume(Bytes volume, const UserShiftProfile& profile);

/// Slots open to demand of `kind` that originates at (tpg, window).
/// Space moves reach the available TPGs (plus the origin); time moves reach
/// windows window .. window + max_delay, wrapping into the next day. Slots
/// are listed delay-major, TPGs ascending, starting at the origin window.
ChoiceSet build_choice_set(const SlotGrid& grid,
                           const ChoiceModelConfig& config, ShiftKind kind,
                           std::size_t origin_tpg, std::size_t origin_window);

/// 1 when traffic leaving `origin_window` lands in `slot_window` of the
/// following day, else 0.
inline std::size_t landing_day_offset(std::size_t origin_window,
                                      std::size_t slot_window) {
  return slot_window < origin_window ? 1 : 0;
}

/// Distributes `volume` over the slots of a split row. Proportional gives
/// floor(volume * s_j) to each slot and the rounding remainder to the
/// largest s_j (lowest index on ties). The result always sums to `volume`.
void assign_into(Bytes volume, std::span<const double> split,
                 AssignmentPolicy policy, Rng& rng, std::span<Bytes> out);
std::vector<Bytes> assign(Bytes volume, std::span<const double> split,
                          AssignmentPolicy policy, Rng& rng);

}  // namespace tardis
