#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "tardis/error.hpp"
#include "tardis/traffic_model.hpp"

using namespace tardis;

namespace {

TraceMatrix parse(const std::string& text, double window_length = 3600.0) {
  std::istringstream in(text);
  return parse_trace(in, window_length);
}

}  // namespace

TEST(TraceMatrix, RejectsWindowLengthThatDoesNotTileADay) {
  EXPECT_THROW(TraceMatrix(1, 1, 24, 1800.0), ValidationError);
  EXPECT_NO_THROW(TraceMatrix(1, 1, 48, 1800.0));
}

TEST(TraceMatrix, RejectsNegativeVolume) {
  std::vector<Bytes> v(24, 0);
  v[3] = -1;
  EXPECT_THROW(TraceMatrix(1, 1, 24, 3600.0, v), ValidationError);
}

TEST(LoadTrace, SingleRowGivesSingleNonzeroCell) {
  const auto t = parse("user_id,day,window,bytes\n1,0,0,100\n");
  EXPECT_EQ(t.users(), 2u);
  EXPECT_EQ(t.days(), 1u);
  EXPECT_EQ(t.windows_per_day(), 24u);
  EXPECT_EQ(t.at(1, 0, 0), 100);
  EXPECT_EQ(t.total(), 100);
}

TEST(LoadTrace, EmptyInputReportsNoRecords) {
  try {
    parse("");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("no records"), std::string::npos);
  }
  EXPECT_THROW(parse("user_id,day,window,bytes\n"), ParseError);
}

TEST(LoadTrace, NegativeBytesIsAValidationError) {
  EXPECT_THROW(parse("user_id,day,window,bytes\n0,0,0,-5\n"),
               ValidationError);
}

TEST(LoadTrace, MalformedRowCarriesLineNumber) {
  try {
    parse("user_id,day,window,bytes\n0,0,0,5\n0,0,x,5\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadTrace, UnknownWindowRejected) {
  EXPECT_THROW(parse("user_id,day,window,bytes\n0,0,24,5\n"), ValidationError);
}

TEST(LoadTrace, RoundTripsThroughWriter) {
  SyntheticTraceParams p;
  p.users = 5;
  p.days = 2;
  p.seed = 9;
  const auto trace = generate_synthetic_trace(p);
  std::ostringstream out;
  write_trace(out, trace);
  EXPECT_EQ(parse(out.str(), trace.window_length()), trace);
}

TEST(SyntheticTrace, SameSeedIsBitwiseIdentical) {
  SyntheticTraceParams p;
  p.users = 50;
  p.seed = 42;
  EXPECT_EQ(generate_synthetic_trace(p), generate_synthetic_trace(p));
  auto q = p;
  q.seed = 43;
  EXPECT_NE(generate_synthetic_trace(p), generate_synthetic_trace(q));
}

TEST(SyntheticTrace, FlatProfileHasEqualExpectedWindows) {
  for (double h = 0; h < 24; h += 1.0) {
    EXPECT_DOUBLE_EQ(diurnal_envelope(h, 20.0, 1.0), 1.0);
  }
}

TEST(SyntheticTrace, EnvelopePeakToTroughMatchesRatio) {
  EXPECT_NEAR(diurnal_envelope(20.0, 20.0, 4.0) /
                  diurnal_envelope(8.0, 20.0, 4.0),
              4.0, 1e-12);
}

TEST(SyntheticTrace, AggregateFollowsDiurnalRatio) {
  SyntheticTraceParams p;
  p.users = 1000;
  p.days = 7;
  p.peak_to_trough_ratio = 4.0;
  p.diurnal_peak_hour = 20.0;
  p.seed = 3;
  const auto t = generate_synthetic_trace(p);
  double at20 = 0.0;
  double at8 = 0.0;
  for (std::size_t d = 0; d < t.days(); ++d) {
    const auto w = t.window_totals(d);
    at20 += static_cast<double>(w[20]);
    at8 += static_cast<double>(w[8]);
  }
  EXPECT_NEAR(at20 / at8, 4.0, 0.4);
}

TEST(TpgSplit, T0SplitsEveryCellIntoThirds) {
  const auto shares = tpg_shares(TpgSplitPolicy::spaced(3, 0.0), 7.0);
  for (double s : shares) EXPECT_NEAR(s, 1.0 / 3.0, 1e-15);
}

TEST(TpgSplit, T2SharesAtMidnightMatchHandEvaluation) {
  const auto shares = tpg_shares(TpgSplitPolicy::spaced(3, 2.0), 0.0);
  // Weights 2, 1 + cos(pi/6), 1.5: cosine half is weight / 5.3660.
  const double w1 = 1.0 + std::cos(std::numbers::pi / 6.0);
  const double sum = 2.0 + w1 + 1.5;
  EXPECT_NEAR(shares[0], 0.5 / 3 + 0.5 * 2.0 / sum, 1e-15);
  EXPECT_NEAR(shares[1], 0.5 / 3 + 0.5 * w1 / sum, 1e-15);
  EXPECT_NEAR(shares[2], 0.5 / 3 + 0.5 * 1.5 / sum, 1e-15);
  EXPECT_NEAR(2.0 / sum, 0.3727, 1e-4);
  EXPECT_NEAR(w1 / sum, 0.3478, 1e-4);
  EXPECT_NEAR(1.5 / sum, 0.2795, 1e-4);
}

TEST(TpgSplit, EqualFractionOneIgnoresPeaks) {
  TpgSplitPolicy p = TpgSplitPolicy::spaced(3, 4.0, 1.0);
  for (double h : {0.0, 5.0, 13.0}) {
    for (double s : tpg_shares(p, h)) EXPECT_DOUBLE_EQ(s, 1.0 / 3.0);
  }
}

TEST(TpgSplit, ConservesEveryCellExactly) {
  SyntheticTraceParams p;
  p.users = 40;
  p.days = 3;
  const auto trace = generate_synthetic_trace(p);
  for (double spacing : {0.0, 2.0, 4.0}) {
    const auto parts = split_by_tpg(trace, TpgSplitPolicy::spaced(3, spacing));
    ASSERT_EQ(parts.size(), 3u);
    for (std::size_t i = 0; i < trace.data().size(); ++i) {
      Bytes sum = 0;
      for (const auto& part : parts) {
        EXPECT_GE(part.data()[i], 0);
        sum += part.data()[i];
      }
      EXPECT_EQ(sum, trace.data()[i]);
    }
  }
}

TEST(TpgSplit, RejectsMismatchedPolicy) {
  TpgSplitPolicy p;
  p.peak_hours = {0.0};
  EXPECT_THROW(p.validate(), ValidationError);
  p = TpgSplitPolicy{};
  p.equal_fraction = 1.5;
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(ExtraDay, SingleDayZeroVarianceCopiesTheDay) {
  SyntheticTraceParams p;
  p.users = 30;
  p.days = 1;
  const auto trace = generate_synthetic_trace(p);
  const auto day = generate_extra_day(trace, 5);
  EXPECT_DOUBLE_EQ(day.scale, 1.0);
  for (std::size_t u = 0; u < trace.users(); ++u) {
    const auto row = trace.day_row(u, 0);
    const auto out = day.user_row(u);
    for (std::size_t w = 0; w < row.size(); ++w) EXPECT_EQ(out[w], row[w]);
  }
}

TEST(ExtraDay, TotalEqualsRoundedTarget) {
  SyntheticTraceParams p;
  p.users = 60;
  p.days = 5;
  const auto trace = generate_synthetic_trace(p);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto day = generate_extra_day(trace, seed);
    EXPECT_EQ(day.total(), std::llround(day.target_total));
  }
}

TEST(ExtraDay, EachUserRowIsAScaledRealDay) {
  SyntheticTraceParams p;
  p.users = 40;
  p.days = 4;
  const auto trace = generate_synthetic_trace(p);
  const auto day = generate_extra_day(trace, 11);
  std::size_t largest_user = 0;
  Bytes largest = -1;
  for (std::size_t i = 0; i < day.volumes.size(); ++i) {
    if (day.volumes[i] > largest) {
      largest = day.volumes[i];
      largest_user = i / day.windows_per_day;
    }
  }
  for (std::size_t u = 0; u < trace.users(); ++u) {
    if (u == largest_user) continue;  // absorbs the rounding residue
    const auto src = trace.day_row(u, day.source_day[u]);
    const auto out = day.user_row(u);
    for (std::size_t w = 0; w < src.size(); ++w) {
      EXPECT_NEAR(static_cast<double>(out[w]),
                  static_cast<double>(src[w]) * day.scale, 0.5 + 1e-9);
    }
  }
}

TEST(ExtraDay, MomentsMatchSourceOverManyDays) {
  SyntheticTraceParams p;
  p.users = 200;
  p.days = 7;
  p.seed = 17;
  const auto trace = generate_synthetic_trace(p);
  std::vector<double> src(trace.days());
  for (std::size_t d = 0; d < trace.days(); ++d) {
    src[d] = static_cast<double>(trace.day_total(d));
  }
  const double src_mean = std::accumulate(src.begin(), src.end(), 0.0) /
                          static_cast<double>(src.size());
  double src_var = 0.0;
  for (double s : src) src_var += (s - src_mean) * (s - src_mean);
  src_var /= static_cast<double>(src.size());

  constexpr int kDays = 1000;
  double mean = 0.0;
  double sq = 0.0;
  for (int i = 0; i < kDays; ++i) {
    const double t =
        static_cast<double>(generate_extra_day(trace, 1000 + i).total());
    mean += t;
    sq += t * t;
  }
  mean /= kDays;
  const double var = sq / kDays - mean * mean;
  EXPECT_NEAR(mean / src_mean, 1.0, 0.05);
  EXPECT_NEAR(var / src_var, 1.0, 0.10);
}

TEST(ExtraDay, ZeroTrafficTraceIsAnError) {
  const TraceMatrix empty(3, 2, 24, 3600.0);
  EXPECT_THROW(generate_extra_day(empty, 1), ValidationError);
}
