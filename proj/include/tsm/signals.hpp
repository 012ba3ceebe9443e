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

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace tsm {

enum class Unit { millimeter, newton, millimeter_per_second, dimensionless };

std::string_view unit_name(Unit unit);

/// Uniformly sampled real-valued series. The grid (t0, dt) and the unit tag
/// are fixed at construction; only the samples may be edited afterwards.
class TimeSeries {
 public:
  TimeSeries(double t0, double dt, Unit unit, std::vector<double> values);

  double t0() const noexcept { return t0_; }
  double dt() const noexcept { return dt_; }
  Unit unit() const noexcept { return unit_; }
  std::size_t size() const noexcept { return values_.size(); }
  double time_at(std::size_t i) const noexcept { return t0_ + dt_ * static_cast<double>(i); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  /// Copy of samples [first, first + count) on the same grid.
  TimeSeries slice(std::size_t first, std::size_t count) const;

 private:
  double t0_;
  double dt_;
  Unit unit_;
  std::vector<double> values_;
};

struct MetricReport {
  double rmse = 0.0;
  double mae = 0.0;
  double std = 0.0;
  double pearson = 0.0;
  std::optional<double> normalized_correlation;
};

void to_json(nlohmann::json& j, const MetricReport& m);
void from_json(const nlohmann::json& j, MetricReport& m);

struct ErrorStats {
  double mae = 0.0;
  double std = 0.0;  // population std of |a - b|
};

struct PhaseGain {
  double gain = 0.0;
  double lag = 0.0;  // seconds, in [0, period)
};

double rmse(const TimeSeries& a, const TimeSeries& b);
ErrorStats mae_std(const TimeSeries& a, const TimeSeries& b);

/// Population std of the signed residual a - b.
double residual_std(const TimeSeries& a, const TimeSeries& b);

double pearson(const TimeSeries& desired, const TimeSeries& measured);

/// Min-max rescaling of a set of correlation coefficients onto [0, 1].
std::vector<double> normalize_correlations(std::span<const double> rs);

/// Gain and lag of `measured` relative to `reference` at the fundamental
/// 1/period, from a single-bin Fourier projection over the trailing whole
/// periods of the record.
PhaseGain phase_gain(const TimeSeries& reference, const TimeSeries& measured, double period);

/// Everything but normalized_correlation, which only exists within a sweep.
MetricReport evaluate(const TimeSeries& desired, const TimeSeries& measured);

/// Signed shoelace area of the closed curve (x_i, y_i); positive when y lags x.
double loop_area(std::span<const double> x, std::span<const double> y);

}  // namespace tsm
