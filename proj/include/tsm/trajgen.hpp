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
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsm/signals.hpp"

namespace tsm {

/// Seeded generator used everywhere randomness is needed. The engine is
/// std::mt19937_64 (fully specified by the standard); doubles are formed from
/// the top 53 bits so the mapping is identical on every platform, unlike
/// std::uniform_real_distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform on {0, ..., n - 1} by rejection, n > 0.
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

enum class TrajectoryKind { sinusoid, random };
enum class InterpMethod { lerp, cubic_hermite, catmull_rom };

std::string_view to_string(InterpMethod m);

struct Waypoint {
  std::size_t index = 0;
  double position = 0.0;  // mm
};

inline constexpr double kWaypointLow = 5.0;
inline constexpr double kWaypointHigh = 15.0;

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::random;
  double amplitude = 16.0;        // mm, sinusoid peak
  double period = 10.0;           // s, sinusoid
  double duration = 30.0;         // s, sinusoid record length
  std::size_t n_waypoints = 40;   // random
  double segment_duration = 2.0;  // s, random
  double sample_rate = 55.0;      // Hz
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t samples_per_segment() const;
};

void to_json(nlohmann::json& j, const TrajectorySpec& s);
void from_json(const nlohmann::json& j, TrajectorySpec& s);

/// Raised cosine (A/2)(1 - cos(2 pi t / period)): starts at rest at 0, peaks at A.
TimeSeries gen_sinusoid(const TrajectorySpec& spec);

/// p_0 = 0 mm, p_1..p_{N-1} i.i.d. uniform on [5, 15] mm.
std::vector<Waypoint> sample_waypoints(const TrajectorySpec& spec, Rng& rng);

/// Neighbours of a segment; spline methods need both for full tangents.
struct SegmentContext {
  std::optional<double> before;  // waypoint preceding p_a
  std::optional<double> after;   // waypoint following p_b
};

struct SegmentSamples {
  std::vector<double> samples;
  /// True when a missing neighbour forced a zero tangent at that end.
  bool clamped_start = false;
  bool clamped_end = false;
};

SegmentSamples interpolate_segment(const Waypoint& a, const Waypoint& b, InterpMethod method,
                                   const SegmentContext& context, std::size_t n_samples);

struct RandomTrajectory {
  TimeSeries series;
  std::vector<Waypoint> waypoints;
  std::vector<InterpMethod> methods;  // one per segment
  std::size_t samples_per_segment = 0;
};

/// Waypoint i sits at sample i * S (S = samples per segment). Segment methods
/// are drawn uniformly from the three interpolants. The record ends with a
/// one-segment dwell at the final waypoint, so it holds N * S samples.
RandomTrajectory gen_random_trajectory_detailed(const TrajectorySpec& spec);
TimeSeries gen_random_trajectory(const TrajectorySpec& spec);

/// Spec for a random trajectory of at least `n_samples` samples.
TrajectorySpec random_spec_for_length(std::size_t n_samples, std::uint64_t seed, double segment_duration = 2.0,
                                      double sample_rate = 55.0);

}  // namespace tsm
