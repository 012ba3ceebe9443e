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

#include "tsm/signals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tsm/error.hpp"

namespace tsm {

std::string_view unit_name(Unit unit) {
  switch (unit) {
    case Unit::millimeter:
      return "mm";
    case Unit::newton:
      return "N";
    case Unit::millimeter_per_second:
      return "mm/s";
    case Unit::dimensionless:
      return "1";
  }
  return "?";
}

TimeSeries::TimeSeries(double t0, double dt, Unit unit, std::vector<double> values)
    : t0_(t0), dt_(dt), unit_(unit), values_(std::move(values)) {
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) {
    throw InvalidSpec("time series dt must be positive, got " + std::to_string(dt_));
  }
  if (values_.empty()) {
    throw InvalidSpec("time series must hold at least one sample");
  }
}

TimeSeries TimeSeries::slice(std::size_t first, std::size_t count) const {
  if (first + count > values_.size() || count == 0) {
    throw DimensionMismatch("slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                            ") outside series of length " + std::to_string(values_.size()));
  }
  std::vector<double> out(values_.begin() + static_cast<std::ptrdiff_t>(first),
                          values_.begin() + static_cast<std::ptrdiff_t>(first + count));
  return TimeSeries(time_at(first), dt_, unit_, std::move(out));
}

void to_json(nlohmann::json& j, const MetricReport& m) {
  j = nlohmann::json{{"rmse_mm", m.rmse}, {"mae_mm", m.mae}, {"std_mm", m.std}, {"pearson", m.pearson}};
  if (m.normalized_correlation) {
    j["norm_corr"] = *m.normalized_correlation;
  } else {
    j["norm_corr"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, MetricReport& m) {
  j.at("rmse_mm").get_to(m.rmse);
  j.at("mae_mm").get_to(m.mae);
  j.at("std_mm").get_to(m.std);
  j.at("pearson").get_to(m.pearson);
  if (j.contains("norm_corr") && !j.at("norm_corr").is_null()) {
    m.normalized_correlation = j.at("norm_corr").get<double>();
  } else {
    m.normalized_correlation.reset();
  }
}

namespace {

void require_compatible(const TimeSeries& a, const TimeSeries& b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("series lengths differ: " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
  }
  if (std::abs(a.dt() - b.dt()) > 1e-12 * std::max(a.dt(), b.dt())) {
    throw DimensionMismatch("series sample spacing differs");
  }
  if (a.unit() != b.unit()) {
    throw DimensionMismatch("series units differ: " + std::string(unit_name(a.unit())) + " vs " +
                            std::string(unit_name(b.unit())));
  }
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double rmse(const TimeSeries& a, const TimeSeries& b) {
  require_compatible(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

ErrorStats mae_std(const TimeSeries& a, const TimeSeries& b) {
  require_compatible(a, b);
  const auto n = static_cast<double>(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  const double m = s / n;
  double v = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]) - m;
    v += d * d;
  }
  return {m, std::sqrt(v / n)};
}

double residual_std(const TimeSeries& a, const TimeSeries& b) {
  require_compatible(a, b);
  const auto n = static_cast<double>(a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] - b[i];
  const double m = s / n;
  double v = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = (a[i] - b[i]) - m;
    v += d * d;
  }
  return std::sqrt(v / n);
}

double pearson(const TimeSeries& desired, const TimeSeries& measured) {
  require_compatible(desired, measured);
  if (desired.size() < 2) {
    throw InsufficientData("pearson needs at least two samples");
  }
  const double md = mean(desired.values());
  const double mm = mean(measured.values());
  double sdm = 0.0;
  double sdd = 0.0;
  double smm = 0.0;
  for (std::size_t i = 0; i < desired.size(); ++i) {
    const double a = desired[i] - md;
    const double b = measured[i] - mm;
    sdm += a * b;
    sdd += a * a;
    smm += b * b;
  }
  if (sdd == 0.0 || smm == 0.0) {
    throw DegenerateInput("pearson correlation undefined for a zero-variance series");
  }
  return std::clamp(sdm / std::sqrt(sdd * smm), -1.0, 1.0);
}

std::vector<double> normalize_correlations(std::span<const double> rs) {
  if (rs.size() < 2) {
    throw InsufficientData("normalization needs at least two correlation values");
  }
  const auto [lo, hi] = std::minmax_element(rs.begin(), rs.end());
  const double span = *hi - *lo;
  if (!(span > 0.0)) {
    throw DegenerateInput("all correlation values are equal; normalization undefined");
  }
  std::vector<double> out;
  out.reserve(rs.size());
  for (double r : rs) {
    if (r == *lo) {
      out.push_back(0.0);
    } else if (r == *hi) {
      out.push_back(1.0);
    } else {
      out.push_back((r - *lo) / span);
    }
  }
  return out;
}

PhaseGain phase_gain(const TimeSeries& reference, const TimeSeries& measured, double period) {
  require_compatible(reference, measured);
  if (!(period > 0.0)) {
    throw InvalidSpec("phase_gain period must be positive");
  }
  const double span = reference.dt() * static_cast<double>(reference.size());
  if (span + 1e-9 * period < 2.0 * period) {
    throw InsufficientData("phase_gain needs at least two periods of data, got " + std::to_string(span) + " s");
  }
  // Trailing whole periods, measured in samples.
  const double samples_per_period = period / reference.dt();
  const auto whole = static_cast<std::size_t>(std::floor(span / period + 1e-9));
  auto count = static_cast<std::size_t>(std::llround(samples_per_period * static_cast<double>(whole)));
  count = std::min(count, reference.size());
  const std::size_t first = reference.size() - count;

  auto project = [&](const TimeSeries& s) {
    const auto vals = s.values().subspan(first, count);
    const double m = mean(vals);
    double re = 0.0;
    double im = 0.0;
    const double w = 2.0 * std::numbers::pi / period;
    for (std::size_t i = 0; i < count; ++i) {
      const double t = s.time_at(first + i);
      re += (vals[i] - m) * std::cos(w * t);
      im += (vals[i] - m) * std::sin(w * t);
    }
    return std::pair{std::hypot(re, im), std::atan2(im, re)};
  };

  const auto [amp_ref, phase_ref] = project(reference);
  const auto [amp_meas, phase_meas] = project(measured);
  if (amp_ref == 0.0) {
    throw DegenerateInput("reference has no content at the requested period");
  }
  // x(t) = A cos(w t - phi) projects to atan2 = phi; a delay raises phi.
  double dphi = std::fmod(phase_meas - phase_ref, 2.0 * std::numbers::pi);
  if (dphi < 0.0) dphi += 2.0 * std::numbers::pi;
  double lag = dphi / (2.0 * std::numbers::pi) * period;
  if (lag >= period) lag -= period;
  // Numerical noise around zero lag can wrap to period - eps.
  if (period - lag < 1e-9 * period) lag = 0.0;
  return {amp_meas / amp_ref, lag};
}

MetricReport evaluate(const TimeSeries& desired, const TimeSeries& measured) {
  MetricReport m;
  m.rmse = rmse(desired, measured);
  const auto e = mae_std(desired, measured);
  m.mae = e.mae;
  m.std = e.std;
  m.pearson = pearson(desired, measured);
  return m;
}

double loop_area(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionMismatch("loop_area needs equal-length coordinate arrays");
  }
  if (x.size() < 3) return 0.0;
  double s = 0.0;
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    s += x[i] * y[j] - x[j] * y[i];
  }
  return 0.5 * s;
}

}  // namespace tsm
