// Copyright 2026 The tsm-dither Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "tsm/error.hpp"
#include "tsm/signals.hpp"
#include "tsm/trajgen.hpp"

namespace tsm {
namespace {

TimeSeries mm(std::vector<double> v, double dt = 0.1) { return TimeSeries(0.0, dt, Unit::millimeter, std::move(v)); }

TEST(TimeSeries, RejectsNonPositiveStepAndEmptyValues) {
  EXPECT_THROW(TimeSeries(0.0, 0.0, Unit::millimeter, {1.0}), InvalidSpec);
  EXPECT_THROW(TimeSeries(0.0, -1.0, Unit::millimeter, {1.0}), InvalidSpec);
  EXPECT_THROW(TimeSeries(0.0, 1.0, Unit::millimeter, {}), InvalidSpec);
}

TEST(TimeSeries, SliceKeepsGridAndUnit) {
  const TimeSeries s(1.0, 0.5, Unit::newton, {0, 1, 2, 3, 4});
  const auto sub = s.slice(2, 2);
  EXPECT_DOUBLE_EQ(sub.t0(), 2.0);
  EXPECT_DOUBLE_EQ(sub.dt(), 0.5);
  EXPECT_EQ(sub.unit(), Unit::newton);
  EXPECT_EQ(sub.size(), 2u);
  EXPECT_DOUBLE_EQ(sub[0], 2.0);
  EXPECT_THROW(s.slice(4, 2), DimensionMismatch);
}

TEST(Rmse, IdentityIsZero) {
  const auto a = mm({1.5, -2.0, 7.25});
  EXPECT_EQ(rmse(a, a), 0.0);
}

TEST(Rmse, TwoSampleValue) {
  // sqrt((9 + 16) / 2)
  EXPECT_NEAR(rmse(mm({0, 0}), mm({3, 4})), 3.5355339059327378, 1e-15);
}

TEST(Rmse, MismatchedSeriesAreRejected) {
  EXPECT_THROW(rmse(mm({0, 0}), mm({0, 0, 0})), DimensionMismatch);
  EXPECT_THROW(rmse(mm({0, 0}), mm({0, 0}, 0.2)), DimensionMismatch);
  EXPECT_THROW(rmse(mm({0, 0}), TimeSeries(0.0, 0.1, Unit::newton, {0, 0})), DimensionMismatch);
}

TEST(MaeStd, IdentityIsZero) {
  const auto a = mm({3, 1, 4, 1, 5});
  const auto e = mae_std(a, a);
  EXPECT_EQ(e.mae, 0.0);
  EXPECT_EQ(e.std, 0.0);
}

TEST(MaeStd, ThreeSampleValue) {
  const auto e = mae_std(mm({0, 0, 0}), mm({1, 2, 3}));
  EXPECT_NEAR(e.mae, 2.0, 1e-15);
  EXPECT_NEAR(e.std, 0.816496580927726, 1e-15);
}

TEST(MaeStd, StdIsOfTheAbsoluteError) {
  // Residuals +1 and -1: |.| is constant, which the signed std would not be.
  const auto e = mae_std(mm({0, 0}), mm({1, -1}));
  EXPECT_DOUBLE_EQ(e.mae, 1.0);
  EXPECT_DOUBLE_EQ(e.std, 0.0);
  EXPECT_DOUBLE_EQ(residual_std(mm({0, 0}), mm({1, -1})), 1.0);
}

TEST(Pearson, PerfectAndAntiCorrelation) {
  const auto a = mm({1, 2, 5, 3, 9});
  EXPECT_NEAR(pearson(a, a), 1.0, 1e-15);
  const auto neg = mm({-1, -2, -5, -3, -9});
  EXPECT_NEAR(pearson(a, neg), -1.0, 1e-15);
}

TEST(Pearson, ThreeSampleValue) {
  // 3 / sqrt(2 * 42 / 9)
  EXPECT_NEAR(pearson(mm({1, 2, 3}), mm({1, 2, 4})), 0.9819805060619657, 1e-14);
}

TEST(Pearson, DegenerateInputsThrow) {
  EXPECT_THROW(pearson(mm({2, 2, 2}), mm({1, 2, 3})), DegenerateInput);
  EXPECT_THROW(pearson(mm({1, 2, 3}), mm({5, 5, 5})), DegenerateInput);
  EXPECT_THROW(pearson(mm({1}), mm({1})), InsufficientData);
}

TEST(NormalizeCorrelations, Examples) {
  const std::vector<double> two{0.5, 1.0};
  EXPECT_EQ(normalize_correlations(two), (std::vector<double>{0.0, 1.0}));
  const std::vector<double> three{1, 2, 3};
  const auto n = normalize_correlations(three);
  EXPECT_DOUBLE_EQ(n[0], 0.0);
  EXPECT_DOUBLE_EQ(n[1], 0.5);
  EXPECT_DOUBLE_EQ(n[2], 1.0);
}

TEST(NormalizeCorrelations, TiesMapToExactEndpoints) {
  const std::vector<double> rs{0.9, 0.1, 0.9, 0.1, 0.4};
  const auto n = normalize_correlations(rs);
  EXPECT_EQ(n[0], 1.0);
  EXPECT_EQ(n[2], 1.0);
  EXPECT_EQ(n[1], 0.0);
  EXPECT_EQ(n[3], 0.0);
  EXPECT_GT(n[4], 0.0);
  EXPECT_LT(n[4], 1.0);
}

TEST(NormalizeCorrelations, DegenerateInputsThrow) {
  const std::vector<double> same{0.3, 0.3, 0.3};
  EXPECT_THROW(normalize_correlations(same), DegenerateInput);
  const std::vector<double> one{0.3};
  EXPECT_THROW(normalize_correlations(one), InsufficientData);
}

TimeSeries sine(double amplitude, double period, double delay, double offset, std::size_t n, double dt) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = offset + amplitude * std::sin(2.0 * std::numbers::pi * (dt * static_cast<double>(i) - delay) / period);
  }
  return mm(std::move(v), dt);
}

TEST(PhaseGain, IdentityHasUnitGainAndNoLag) {
  const auto r = sine(3.0, 2.0, 0.0, 1.0, 1001, 0.01);
  const auto pg = phase_gain(r, r, 2.0);
  EXPECT_NEAR(pg.gain, 1.0, 1e-12);
  EXPECT_NEAR(std::fmod(pg.lag + 1.0, 2.0) - 1.0, 0.0, 1e-12);
}

TEST(PhaseGain, HalfAmplitudeQuarterPeriodDelay) {
  const double period = 2.0;
  const auto r = sine(3.0, period, 0.0, 1.0, 1001, 0.01);
  const auto m = sine(1.5, period, period / 4.0, 4.0, 1001, 0.01);
  const auto pg = phase_gain(r, m, period);
  EXPECT_NEAR(pg.gain, 0.5, 1e-12);
  EXPECT_NEAR(pg.lag, period / 4.0, 1e-12);
}

TEST(PhaseGain, LagStaysInsideOnePeriod) {
  const double period = 1.0;
  const auto r = sine(1.0, period, 0.0, 0.0, 401, 0.01);
  for (double d : {0.05, 0.3, 0.62, 0.97}) {
    const auto pg = phase_gain(r, sine(1.0, period, d, 0.0, 401, 0.01), period);
    EXPECT_GE(pg.lag, 0.0);
    EXPECT_LT(pg.lag, period);
    EXPECT_NEAR(pg.lag, d, 1e-9);
  }
}

TEST(PhaseGain, ShortRecordThrows) {
  const auto r = sine(1.0, 1.0, 0.0, 0.0, 150, 0.01);
  EXPECT_THROW(phase_gain(r, r, 1.0), InsufficientData);
}

TEST(LoopArea, UnitSquareOrientation) {
  const std::vector<double> x{0, 1, 1, 0};
  const std::vector<double> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(loop_area(x, y), 1.0);
  const std::vector<double> yr{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(loop_area(x, yr), -1.0);
}

TEST(LoopArea, LaggingSinusoidIsPositive) {
  // y lags x by phi: area = pi * a * b * sin(phi).
  const std::size_t n = 2000;
  const double phi = 0.3;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    x[i] = 2.0 * std::sin(t);
    y[i] = 0.5 * std::sin(t - phi);
  }
  EXPECT_NEAR(loop_area(x, y), std::numbers::pi * 2.0 * 0.5 * std::sin(phi), 1e-5);
}

TEST(MetricReport, JsonFieldNames) {
  MetricReport m{1.0, 0.5, 0.25, 0.9, std::nullopt};
  nlohmann::json j = m;
  EXPECT_EQ(j.at("rmse_mm"), 1.0);
  EXPECT_EQ(j.at("mae_mm"), 0.5);
  EXPECT_EQ(j.at("std_mm"), 0.25);
  EXPECT_EQ(j.at("pearson"), 0.9);
  EXPECT_TRUE(j.at("norm_corr").is_null());
  m.normalized_correlation = 0.3;
  const auto back = nlohmann::json(m).get<MetricReport>();
  EXPECT_EQ(back.normalized_correlation, 0.3);
}

// Randomized properties over many series pairs.
class MetricProperties : public ::testing::TestWithParam<int> {};

TEST_P(MetricProperties, SymmetryTranslationAffineAndPowerMean) {
  Rng rng(static_cast<std::uint64_t>(GetParam()));
  const std::size_t n = 2 + rng.index(200);
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = rng.uniform(-10, 10);
    b[i] = a[i] + rng.uniform(-3, 3);
  }
  const auto A = mm(a);
  const auto B = mm(b);
  EXPECT_DOUBLE_EQ(rmse(A, B), rmse(B, A));
  EXPECT_DOUBLE_EQ(mae_std(A, B).mae, mae_std(B, A).mae);

  const double c = rng.uniform(-50, 50);
  std::vector<double> ac(a), bc(b);
  for (std::size_t i = 0; i < n; ++i) {
    ac[i] += c;
    bc[i] += c;
  }
  EXPECT_NEAR(rmse(mm(ac), mm(bc)), rmse(A, B), 1e-12);
  EXPECT_NEAR(mae_std(mm(ac), mm(bc)).mae, mae_std(A, B).mae, 1e-12);

  const double alpha = rng.uniform(0.1, 5.0);
  const double beta = rng.uniform(-5, 5);
  std::vector<double> pos(a), neg(a);
  for (std::size_t i = 0; i < n; ++i) {
    pos[i] = alpha * a[i] + beta;
    neg[i] = -alpha * a[i] + beta;
  }
  EXPECT_NEAR(pearson(mm(pos), B), pearson(A, B), 1e-12);
  EXPECT_NEAR(pearson(mm(neg), B), -pearson(A, B), 1e-12);

  const auto rep = evaluate(A, B);
  EXPECT_GE(rep.rmse * rep.rmse, rep.mae * rep.mae * (1.0 - 1e-15));
  EXPECT_GE(rep.pearson, -1.0);
  EXPECT_LE(rep.pearson, 1.0);
  EXPECT_GE(rep.std, 0.0);
}

INSTANTIATE_TEST_SUITE_P(Seeds, MetricProperties, ::testing::Range(0, 50));

}  // namespace
}  // namespace tsm
