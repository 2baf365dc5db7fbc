#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace tardis {

using Bytes = std::int64_t;

inline constexpr double kSecondsPerDay = 86400.0;

/// Per-user, per-day, per-window traffic volumes in bytes. Immutable once
/// built; every (user, day, window) cell exists and is non-negative.
class TraceMatrix {
 public:
  TraceMatrix() = default;

  /// All-zero matrix.
  TraceMatrix(std::size_t users, std::size_t days, std::size_t windows_per_day,
              double window_length);

  /// Takes ownership of `volumes`, laid out [user][day][window]. Throws
  /// ValidationError on a size mismatch, a negative volume, or a window
  /// length that does not tile a day.
  TraceMatrix(std::size_t users, std::size_t days, std::size_t windows_per_day,
              double window_length, std::vector<Bytes> volumes);

  std::size_t users() const { return users_; }
  std::size_t days() const { return days_; }
  std::size_t windows_per_day() const { return windows_; }
  /// Seconds.
  double window_length() const { return window_length_; }

  Bytes at(std::size_t user, std::size_t day, std::size_t window) const {
    return volumes_[index(user, day, window)];
  }
  std::span<const Bytes> day_row(std::size_t user, std::size_t day) const {
    return {volumes_.data() + index(user, day, 0), windows_};
  }
  std::span<const Bytes> data() const { return volumes_; }

  Bytes day_total(std::size_t day) const;
  Bytes user_total(std::size_t user) const;
  Bytes total() const;
  /// Sum over users for each window of `day`.
  std::vector<Bytes> window_totals(std::size_t day) const;

  bool operator==(const TraceMatrix&) const = default;

 private:
  std::size_t index(std::size_t user, std::size_t day,
                    std::size_t window) const {
    return (user * days_ + day) * windows_ + window;
  }

  std::size_t users_ = 0;
  std::size_t days_ = 0;
  std::size_t windows_ = 0;
  double window_length_ = 0.0;
  std::vector<Bytes> volumes_;
};

/// How aggregate traffic is divided between traffic pricing groups: a fixed
/// equal share plus a raised-cosine share peaking at each group's peak hour.
struct TpgSplitPolicy {
  std::size_t tpg_count = 3;
  std::vector<double> peak_hours{0.0, 2.0, 4.0};
  double equal_fraction = 0.5;

  /// Peaks `spacing_hours` apart starting at hour 0 (T0, T2, T4 presets use
  /// spacing 0, 2 and 4).
  static TpgSplitPolicy spaced(std::size_t tpg_count, double spacing_hours,
                               double equal_fraction = 0.5);

  void validate() const;
};

/// Share of traffic at `hour` that goes to each group. Sums to one.
std::vector<double> tpg_shares(const TpgSplitPolicy& policy, double hour);

struct SyntheticTraceParams {
  std::size_t users = 1000;
  std::size_t days = 7;
  std::size_t windows_per_day = 24;
  double diurnal_peak_hour = 20.0;
  double peak_to_trough_ratio = 4.0;
  /// Log-space standard deviation of per-user daily totals.
  double user_size_shape = 1.0;
  /// Median per-user daily total, bytes.
  double median_daily_bytes = 5.0e7;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Relative weight of the raised-cosine diurnal envelope at `hour`.
double diurnal_envelope(double hour, double peak_hour,
                        double peak_to_trough_ratio);

/// Reads `user_id,day,window,bytes` rows. Days are sized by the largest day
/// seen, users by the largest id; missing cells are zero.
TraceMatrix load_trace(const std::filesystem::path& path, double window_length);
TraceMatrix parse_trace(std::istream& in, double window_length);

/// Writes one row per nonzero cell, in (user, day, window) order.
void write_trace(std::ostream& out, const TraceMatrix& trace);
void save_trace(const std::filesystem::path& path, const TraceMatrix& trace);

TraceMatrix generate_synthetic_trace(const SyntheticTraceParams& params);

/// Splits every cell across pricing groups. Shares are rounded down and the
/// remainder is credited to group 0, so each cell is conserved exactly.
std::vector<TraceMatrix> split_by_tpg(const TraceMatrix& trace,
                                      const TpgSplitPolicy& policy);

struct ExtraDay {
  /// [user][window] volumes.
  std::vector<Bytes> volumes;
  std::size_t windows_per_day = 0;
  /// Drawn target total after clamping.
  double target_total = 0.0;
  /// Multiplier applied to the copied real days.
  double scale = 1.0;
  /// Real day copied by each user.
  std::vector<std::size_t> source_day;

  std::span<const Bytes> user_row(std::size_t user) const {
    return {volumes.data() + user * windows_per_day, windows_per_day};
  }
  Bytes total() const;
};

/// Synthesizes one day with the trace's daily-total mean and variance: each
/// user copies one of their own days at random, then every volume is
/// rescaled so the day total hits a normally distributed target (clamped
/// below at 10% of the mean).
ExtraDay generate_extra_day(const TraceMatrix& trace, std::uint64_t seed);

}  // namespace tardis
