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

#include "tsm/trajgen.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "tsm/error.hpp"

namespace tsm {

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw InvalidSpec("Rng::index needs n > 0");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % bound);
}

std::string_view to_string(InterpMethod m) {
  switch (m) {
    case InterpMethod::lerp:
      return "lerp";
    case InterpMethod::cubic_hermite:
      return "cubic_hermite";
    case InterpMethod::catmull_rom:
      return "catmull_rom";
  }
  return "?";
}

void TrajectorySpec::validate() const {
  if (!(sample_rate > 0.0)) throw InvalidSpec("sample_rate must be positive");
  if (kind == TrajectoryKind::sinusoid) {
    if (!(period > 0.0)) throw InvalidSpec("sinusoid period must be positive");
    if (!(amplitude > 0.0)) throw InvalidSpec("sinusoid amplitude must be positive");
    if (!(duration > 0.0)) throw InvalidSpec("sinusoid duration must be positive");
  } else {
    if (n_waypoints < 2) throw InvalidSpec("random trajectory needs at least two waypoints");
    if (samples_per_segment() < 2) throw InvalidSpec("segment_duration * sample_rate must be at least 2 samples");
  }
}

std::size_t TrajectorySpec::samples_per_segment() const {
  const double s = std::round(segment_duration * sample_rate);
  return s > 0.0 ? static_cast<std::size_t>(s) : 0;
}

void to_json(nlohmann::json& j, const TrajectorySpec& s) {
  j = nlohmann::json{{"kind", s.kind == TrajectoryKind::sinusoid ? "sinusoid" : "random"},
                     {"amplitude_mm", s.amplitude},
                     {"period_s", s.period},
                     {"duration_s", s.duration},
                     {"n_waypoints", s.n_waypoints},
                     {"segment_duration_s", s.segment_duration},
                     {"sample_rate_hz", s.sample_rate},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, TrajectorySpec& s) {
  const auto kind = j.value("kind", std::string("random"));
  if (kind == "sinusoid") {
    s.kind = TrajectoryKind::sinusoid;
  } else if (kind == "random") {
    s.kind = TrajectoryKind::random;
  } else {
    throw InvalidSpec("unknown trajectory kind '" + kind + "'");
  }
  s.amplitude = j.value("amplitude_mm", s.amplitude);
  s.period = j.value("period_s", s.period);
  s.duration = j.value("duration_s", s.duration);
  s.n_waypoints = j.value("n_waypoints", s.n_waypoints);
  s.segment_duration = j.value("segment_duration_s", s.segment_duration);
  s.sample_rate = j.value("sample_rate_hz", s.sample_rate);
  s.seed = j.value("seed", s.seed);
}

TimeSeries gen_sinusoid(const TrajectorySpec& spec) {
  if (spec.kind != TrajectoryKind::sinusoid) throw InvalidSpec("gen_sinusoid needs a sinusoid spec");
  spec.validate();
  const double dt = 1.0 / spec.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration * spec.sample_rate)) + 1;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = dt * static_cast<double>(i);
    v[i] = 0.5 * spec.amplitude * (1.0 - std::cos(2.0 * std::numbers::pi * t / spec.period));
  }
  return TimeSeries(0.0, dt, Unit::millimeter, std::move(v));
}

std::vector<Waypoint> sample_waypoints(const TrajectorySpec& spec, Rng& rng) {
  if (spec.kind != TrajectoryKind::random) throw InvalidSpec("sample_waypoints needs a random spec");
  spec.validate();
  std::vector<Waypoint> w;
  w.reserve(spec.n_waypoints);
  w.push_back({0, 0.0});
  for (std::size_t i = 1; i < spec.n_waypoints; ++i) {
    w.push_back({i, rng.uniform(kWaypointLow, kWaypointHigh)});
  }
  return w;
}

namespace {

double hermite(double p0, double p1, double m0, double m1, double s) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * m0 + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * m1;
}

// Catmull-Rom in its basis-matrix form with tension tau.
double catmull_rom(double q0, double q1, double q2, double q3, double s, double tau) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return q1 + s * (-tau * q0 + tau * q2) + s2 * (2 * tau * q0 + (tau - 3) * q1 + (3 - 2 * tau) * q2 - tau * q3) +
         s3 * (-tau * q0 + (2 - tau) * q1 + (tau - 2) * q2 + tau * q3);
}

constexpr double kCatmullRomTension = 0.5;

}  // namespace

SegmentSamples interpolate_segment(const Waypoint& a, const Waypoint& b, InterpMethod method,
                                   const SegmentContext& context, std::size_t n_samples) {
  if (n_samples < 2) throw InvalidSpec("interpolate_segment needs n_samples >= 2");
  SegmentSamples out;
  out.samples.resize(n_samples);
  const double pa = a.position;
  const double pb = b.position;
  const double last = static_cast<double>(n_samples - 1);

  if (method == InterpMethod::lerp) {
    for (std::size_t i = 0; i < n_samples; ++i) {
      const double s = static_cast<double>(i) / last;
      out.samples[i] = pa + (pb - pa) * s;
    }
  } else if (method == InterpMethod::cubic_hermite) {
    // Central-difference tangents in "per segment" units.
    double ma = 0.0;
    double mb = 0.0;
    if (context.before) {
      ma = 0.5 * (pb - *context.before);
    } else {
      out.clamped_start = true;
    }
    if (context.after) {
      mb = 0.5 * (*context.after - pa);
    } else {
      out.clamped_end = true;
    }
    for (std::size_t i = 0; i < n_samples; ++i) {
      out.samples[i] = hermite(pa, pb, ma, mb, static_cast<double>(i) / last);
    }
  } else {
    // A missing neighbour is replaced by a phantom point that zeroes the tangent:
    // tau * (q2 - q0) = 0 requires q0 = q2.
    const double q0 = context.before ? *context.before : pb;
    const double q3 = context.after ? *context.after : pa;
    out.clamped_start = !context.before;
    out.clamped_end = !context.after;
    for (std::size_t i = 0; i < n_samples; ++i) {
      out.samples[i] = catmull_rom(q0, pa, pb, q3, static_cast<double>(i) / last, kCatmullRomTension);
    }
  }
  out.samples.front() = pa;
  out.samples.back() = pb;
  return out;
}

RandomTrajectory gen_random_trajectory_detailed(const TrajectorySpec& spec) {
  if (spec.kind != TrajectoryKind::random) throw InvalidSpec("gen_random_trajectory needs a random spec");
  spec.validate();
  Rng rng(spec.seed);
  auto waypoints = sample_waypoints(spec, rng);
  const std::size_t seg = spec.samples_per_segment();
  const std::size_t n_wp = waypoints.size();

  std::vector<double> v;
  v.reserve(n_wp * seg);
  std::vector<InterpMethod> methods;
  methods.reserve(n_wp - 1);
  v.push_back(waypoints.front().position);
  for (std::size_t i = 0; i + 1 < n_wp; ++i) {
    const auto method = static_cast<InterpMethod>(rng.index(3));
    methods.push_back(method);
    SegmentContext ctx;
    if (i > 0) ctx.before = waypoints[i - 1].position;
    if (i + 2 < n_wp) ctx.after = waypoints[i + 2].position;
    const auto s = interpolate_segment(waypoints[i], waypoints[i + 1], method, ctx, seg + 1);
    v.insert(v.end(), s.samples.begin() + 1, s.samples.end());
  }
  // Dwell at the last waypoint for the remainder of the final segment slot.
  v.insert(v.end(), seg - 1, waypoints.back().position);

  RandomTrajectory out{TimeSeries(0.0, 1.0 / spec.sample_rate, Unit::millimeter, std::move(v)), std::move(waypoints),
                       std::move(methods), seg};
  return out;
}

TimeSeries gen_random_trajectory(const TrajectorySpec& spec) { return gen_random_trajectory_detailed(spec).series; }

TrajectorySpec random_spec_for_length(std::size_t n_samples, std::uint64_t seed, double segment_duration,
                                      double sample_rate) {
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::random;
  spec.segment_duration = segment_duration;
  spec.sample_rate = sample_rate;
  spec.seed = seed;
  const std::size_t seg = spec.samples_per_segment();
  if (seg == 0) throw InvalidSpec("segment too short for the sample rate");
  spec.n_waypoints = std::max<std::size_t>(2, (n_samples + seg - 1) / seg);
  return spec;
}

}  // namespace tsm
