#include "tardis/traffic_model.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>

#include "tardis/error.hpp"
#include "tardis/rng.hpp"

namespace tardis {
namespace {

std::size_t windows_for_length(double window_length) {
  if (!(window_length > 0.0)) {
    throw ValidationError("window length must be positive");
  }
  const double count = kSecondsPerDay / window_length;
  const double rounded = std::round(count);
  if (rounded < 1.0 || std::abs(count - rounded) > 1e-9 * count) {
    throw ValidationError("window length " + std::to_string(window_length) +
                          " s does not divide a day");
  }
  return static_cast<std::size_t>(rounded);
}

void check_tiling(std::size_t windows_per_day, double window_length) {
  if (windows_per_day == 0) {
    throw ValidationError("windows_per_day must be positive");
  }
  if (std::abs(window_length * static_cast<double>(windows_per_day) -
               kSecondsPerDay) > 1e-6) {
    throw ValidationError("window_length x windows_per_day must be 86400 s");
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' ||
                        s.back() == '\t')) {
    s.remove_suffix(1);
  }
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  return s;
}

std::int64_t parse_field(std::string_view field, std::size_t line,
                         const char* name) {
  field = trim(field);
  std::int64_t value = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(std::string("bad ") + name + " field '" +
                         std::string(field) + "'",
                     line);
  }
  return value;
}

}  // namespace

TraceMatrix::TraceMatrix(std::size_t users, std::size_t days,
                         std::size_t windows_per_day, double window_length)
    : TraceMatrix(users, days, windows_per_day, window_length,
                  std::vector<Bytes>(users * days * windows_per_day, 0)) {}

TraceMatrix::TraceMatrix(std::size_t users, std::size_t days,
                         std::size_t windows_per_day, double window_length,
                         std::vector<Bytes> volumes)
    : users_(users),
      days_(days),
      windows_(windows_per_day),
      window_length_(window_length),
      volumes_(std::move(volumes)) {
  check_tiling(windows_per_day, window_length);
  if (volumes_.size() != users * days * windows_per_day) {
    throw ValidationError("trace volume count does not match dimensions");
  }
  if (std::any_of(volumes_.begin(), volumes_.end(),
                  [](Bytes v) { return v < 0; })) {
    throw ValidationError("trace volumes must be non-negative");
  }
}

Bytes TraceMatrix::day_total(std::size_t day) const {
  Bytes sum = 0;
  for (std::size_t u = 0; u < users_; ++u) {
    for (Bytes v : day_row(u, day)) sum += v;
  }
  return sum;
}

Bytes TraceMatrix::user_total(std::size_t user) const {
  const auto first = volumes_.begin() + static_cast<std::ptrdiff_t>(
                                            index(user, 0, 0));
  return std::accumulate(
      first, first + static_cast<std::ptrdiff_t>(days_ * windows_), Bytes{0});
}

Bytes TraceMatrix::total() const {
  return std::accumulate(volumes_.begin(), volumes_.end(), Bytes{0});
}

std::vector<Bytes> TraceMatrix::window_totals(std::size_t day) const {
  std::vector<Bytes> sums(windows_, 0);
  for (std::size_t u = 0; u < users_; ++u) {
    auto row = day_row(u, day);
    for (std::size_t w = 0; w < windows_; ++w) sums[w] += row[w];
  }
  return sums;
}

TpgSplitPolicy TpgSplitPolicy::spaced(std::size_t tpg_count,
                                      double spacing_hours,
                                      double equal_fraction) {
  TpgSplitPolicy policy;
  policy.tpg_count = tpg_count;
  policy.equal_fraction = equal_fraction;
  policy.peak_hours.resize(tpg_count);
  for (std::size_t i = 0; i < tpg_count; ++i) {
    policy.peak_hours[i] = spacing_hours * static_cast<double>(i);
  }
  return policy;
}

void TpgSplitPolicy::validate() const {
  if (tpg_count == 0) throw ValidationError("tpg_count must be positive");
  if (peak_hours.size() != tpg_count) {
    throw ValidationError("peak_hours must have one entry per TPG");
  }
  if (!(equal_fraction >= 0.0 && equal_fraction <= 1.0)) {
    throw ValidationError("equal_fraction must lie in [0, 1]");
  }
}

std::vector<double> tpg_shares(const TpgSplitPolicy& policy, double hour) {
  const std::size_t n = policy.tpg_count;
  std::vector<double> weights(n);
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weights[i] = 1.0 + std::cos((hour - policy.peak_hours[i]) * 2.0 *
                                std::numbers::pi / 24.0);
    weight_sum += weights[i];
  }
  const double equal = policy.equal_fraction / static_cast<double>(n);
  std::vector<double> shares(n);
  for (std::size_t i = 0; i < n; ++i) {
    // 1 + cos can only vanish for every group at once if all peaks coincide
    // at the trough; fall back to an equal split there.
    const double cosine = weight_sum > 0.0
                              ? weights[i] / weight_sum
                              : 1.0 / static_cast<double>(n);
    shares[i] = equal + (1.0 - policy.equal_fraction) * cosine;
  }
  return shares;
}

void SyntheticTraceParams::validate() const {
  if (users < 1) throw ValidationError("synthetic trace needs >= 1 user");
  if (days < 1) throw ValidationError("synthetic trace needs >= 1 day");
  if (windows_per_day < 1) {
    throw ValidationError("synthetic trace needs >= 1 window per day");
  }
  if (!(peak_to_trough_ratio >= 1.0)) {
    throw ValidationError("peak_to_trough_ratio must be >= 1");
  }
  if (!(user_size_shape >= 0.0)) {
    throw ValidationError("user_size_shape must be >= 0");
  }
  if (!(median_daily_bytes > 0.0)) {
    throw ValidationError("median_daily_bytes must be positive");
  }
}

double diurnal_envelope(double hour, double peak_hour,
                        double peak_to_trough_ratio) {
  const double amplitude =
      (peak_to_trough_ratio - 1.0) / (peak_to_trough_ratio + 1.0);
  return 1.0 +
         amplitude * std::cos((hour - peak_hour) * 2.0 * std::numbers::pi / 24.0);
}

TraceMatrix parse_trace(std::istream& in, double window_length) {
  const std::size_t windows = windows_for_length(window_length);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("no records");
  ++line_no;
  if (trim(line) != "user_id,day,window,bytes") {
    throw ParseError("expected header 'user_id,day,window,bytes'", line_no);
  }

  struct Row {
    std::int64_t user, day, window, bytes;
  };
  std::vector<Row> rows;
  std::int64_t max_user = -1;
  std::int64_t max_day = -1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    std::array<std::string_view, 4> fields;
    std::size_t count = 0;
    while (true) {
      const auto comma = view.find(',');
      if (count == fields.size()) {
        throw ParseError("expected 4 fields", line_no);
      }
      fields[count++] = view.substr(0, comma);
      if (comma == std::string_view::npos) break;
      view.remove_prefix(comma + 1);
    }
    if (count != 4) throw ParseError("expected 4 fields", line_no);
    Row row{parse_field(fields[0], line_no, "user_id"),
            parse_field(fields[1], line_no, "day"),
            parse_field(fields[2], line_no, "window"),
            parse_field(fields[3], line_no, "bytes")};
    if (row.bytes < 0) {
      throw ValidationError("line " + std::to_string(line_no) +
                            ": negative byte count");
    }
    if (row.user < 0) throw ParseError("negative user_id", line_no);
    if (row.day < 0) throw ParseError("negative day", line_no);
    if (row.window < 0 || static_cast<std::size_t>(row.window) >= windows) {
      throw ValidationError("line " + std::to_string(line_no) + ": window " +
                            std::to_string(row.window) + " outside 0.." +
                            std::to_string(windows - 1));
    }
    max_user = std::max(max_user, row.user);
    max_day = std::max(max_day, row.day);
    rows.push_back(row);
  }
  if (rows.empty()) throw ParseError("no records");

  const auto users = static_cast<std::size_t>(max_user + 1);
  const auto days = static_cast<std::size_t>(max_day + 1);
  std::vector<Bytes> volumes(users * days * windows, 0);
  std::vector<bool> seen(volumes.size(), false);
  for (const Row& row : rows) {
    const std::size_t idx =
        (static_cast<std::size_t>(row.user) * days +
         static_cast<std::size_t>(row.day)) * windows +
        static_cast<std::size_t>(row.window);
    if (seen[idx]) {
      throw ValidationError("duplicate cell user=" + std::to_string(row.user) +
                            " day=" + std::to_string(row.day) +
                            " window=" + std::to_string(row.window));
    }
    seen[idx] = true;
    volumes[idx] = row.bytes;
  }
  return TraceMatrix(users, days, windows, window_length, std::move(volumes));
}

TraceMatrix load_trace(const std::filesystem::path& path,
                       double window_length) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace file " + path.string());
  return parse_trace(in, window_length);
}

void write_trace(std::ostream& out, const TraceMatrix& trace) {
  out << "user_id,day,window,bytes\n";
  for (std::size_t u = 0; u < trace.users(); ++u) {
    for (std::size_t d = 0; d < trace.days(); ++d) {
      auto row = trace.day_row(u, d);
      for (std::size_t w = 0; w < row.size(); ++w) {
        if (row[w] != 0) {
          out << u << ',' << d << ',' << w << ',' << row[w] << '\n';
        }
      }
    }
  }
}

void save_trace(const std::filesystem::path& path, const TraceMatrix& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write trace file " + path.string());
  write_trace(out, trace);
}

TraceMatrix generate_synthetic_trace(const SyntheticTraceParams& params) {
  params.validate();
  const std::size_t windows = params.windows_per_day;
  const double window_length = kSecondsPerDay / static_cast<double>(windows);

  std::vector<double> profile(windows);
  for (std::size_t w = 0; w < windows; ++w) {
    const double hour = 24.0 * static_cast<double>(w) /
                        static_cast<double>(windows);
    profile[w] = diurnal_envelope(hour, params.diurnal_peak_hour,
                                  params.peak_to_trough_ratio);
  }
  const double profile_sum =
      std::accumulate(profile.begin(), profile.end(), 0.0);
  for (double& p : profile) p /= profile_sum;

  // Day-level activity and per-cell noise are unit-mean gamma variates, so
  // the expected aggregate keeps the exact envelope shape.
  constexpr double kActivityShape = 4.0;
  constexpr double kCellShape = 4.0;

  std::vector<Bytes> volumes(params.users * params.days * windows);
  for (std::size_t u = 0; u < params.users; ++u) {
    Rng rng = make_rng(derive_seed(params.seed, 0x7472616365, u));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::gamma_distribution<double> activity(kActivityShape,
                                             1.0 / kActivityShape);
    std::gamma_distribution<double> cell(kCellShape, 1.0 / kCellShape);
    const double user_daily =
        params.median_daily_bytes *
        std::exp(params.user_size_shape * normal(rng));
    for (std::size_t d = 0; d < params.days; ++d) {
      const double day_volume = user_daily * activity(rng);
      Bytes* out = volumes.data() + (u * params.days + d) * windows;
      for (std::size_t w = 0; w < windows; ++w) {
        out[w] = std::llround(day_volume * profile[w] * cell(rng));
      }
    }
  }
  return TraceMatrix(params.users, params.days, windows, window_length,
                     std::move(volumes));
}

std::vector<TraceMatrix> split_by_tpg(const TraceMatrix& trace,
                                      const TpgSplitPolicy& policy) {
  policy.validate();
  const std::size_t n = policy.tpg_count;
  const std::size_t windows = trace.windows_per_day();

  std::vector<std::vector<double>> shares(windows);
  for (std::size_t w = 0; w < windows; ++w) {
    const double hour = 24.0 * static_cast<double>(w) /
                        static_cast<double>(windows);
    shares[w] = tpg_shares(policy, hour);
  }

  std::vector<std::vector<Bytes>> parts(
      n, std::vector<Bytes>(trace.data().size(), 0));
  const auto source = trace.data();
  for (std::size_t idx = 0; idx < source.size(); ++idx) {
    const Bytes volume = source[idx];
    if (volume == 0) continue;
    const auto& share = shares[idx % windows];
    Bytes assigned = 0;
    for (std::size_t g = 1; g < n; ++g) {
      const auto part = static_cast<Bytes>(
          std::floor(static_cast<double>(volume) * share[g]));
      parts[g][idx] = part;
      assigned += part;
    }
    parts[0][idx] = volume - assigned;
  }

  std::vector<TraceMatrix> result;
  result.reserve(n);
  for (auto& part : parts) {
    result.emplace_back(trace.users(), trace.days(), windows,
                        trace.window_length(), std::move(part));
  }
  return result;
}

Bytes ExtraDay::total() const {
  return std::accumulate(volumes.begin(), volumes.end(), Bytes{0});
}

ExtraDay generate_extra_day(const TraceMatrix& trace, std::uint64_t seed) {
  if (trace.days() < 1) throw ValidationError("trace has no days");
  if (trace.total() <= 0) {
    throw ValidationError("trace carries no traffic; extra-day scale undefined");
  }
  const std::size_t days = trace.days();
  const std::size_t windows = trace.windows_per_day();

  double mean = 0.0;
  std::vector<double> totals(days);
  for (std::size_t d = 0; d < days; ++d) {
    totals[d] = static_cast<double>(trace.day_total(d));
    mean += totals[d];
  }
  mean /= static_cast<double>(days);
  double variance = 0.0;
  for (double t : totals) variance += (t - mean) * (t - mean);
  variance /= static_cast<double>(days);

  Rng rng = make_rng(seed);
  double target = mean;
  if (variance > 0.0) {
    std::normal_distribution<double> normal(mean, std::sqrt(variance));
    target = normal(rng);
  }
  target = std::max(target, 0.1 * mean);

  ExtraDay day;
  day.windows_per_day = windows;
  day.target_total = target;
  day.source_day.resize(trace.users());
  day.volumes.assign(trace.users() * windows, 0);

  Bytes raw_total = 0;
  // A draw where every user happens to pick an empty day is possible only
  // for very sparse traces; redraw a bounded number of times.
  for (int attempt = 0; attempt < 64 && raw_total == 0; ++attempt) {
    for (std::size_t u = 0; u < trace.users(); ++u) {
      day.source_day[u] = static_cast<std::size_t>(uniform_index(rng, days));
    }
    raw_total = 0;
    for (std::size_t u = 0; u < trace.users(); ++u) {
      for (Bytes v : trace.day_row(u, day.source_day[u])) raw_total += v;
    }
  }
  if (raw_total == 0) {
    throw ValidationError("could not draw a non-empty extra day");
  }

  day.scale = target / static_cast<double>(raw_total);
  const auto target_bytes = static_cast<Bytes>(std::llround(target));
  Bytes assigned = 0;
  std::size_t largest = 0;
  for (std::size_t u = 0; u < trace.users(); ++u) {
    auto row = trace.day_row(u, day.source_day[u]);
    for (std::size_t w = 0; w < windows; ++w) {
      const std::size_t idx = u * windows + w;
      day.volumes[idx] = std::llround(static_cast<double>(row[w]) * day.scale);
      assigned += day.volumes[idx];
      if (day.volumes[idx] > day.volumes[largest]) largest = idx;
    }
  }
  // Rounding residue goes to the largest cell so the total is exact.
  day.volumes[largest] =
      std::max<Bytes>(0, day.volumes[largest] + (target_bytes - assigned));
  return day;
}

}  // namespace tardis
