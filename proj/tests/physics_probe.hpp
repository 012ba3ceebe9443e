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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tsm/control.hpp"
#include "tsm/plant.hpp"
#include "tsm/signals.hpp"
#include "tsm/trajgen.hpp"

namespace tsm::testing {

/// Records every plant step and checks the per-step physics invariants.
struct InvariantProbe : PlantProbe {
  std::size_t decimation = 10;
  std::vector<double> x_in, x_out;
  double min_tension = 0.0;
  double min_dissipation_margin = 0.0;  // min over steps of dissipation + tol * steps
  std::size_t steps = 0;
  bool first = true;

  void on_step(const PlantState& s) override {
    const double tol = 1e-9 * static_cast<double>(s.steps);
    const double t = std::min(s.T_in, s.T_out);
    const double d = s.dissipation + tol;
    if (first) {
      min_tension = t;
      min_dissipation_margin = d;
      first = false;
    } else {
      min_tension = std::min(min_tension, t);
      min_dissipation_margin = std::min(min_dissipation_margin, d);
    }
    if (steps % decimation == 0) {
      x_in.push_back(s.x_in);
      x_out.push_back(s.x_out);
    }
    ++steps;
  }
};

/// Lag in samples that maximizes the centered cross-correlation of y against
/// x over [-max_lag, max_lag]; positive means y trails x.
inline long peak_lag(const std::vector<double>& x, const std::vector<double>& y, long max_lag) {
  const auto n = static_cast<long>(std::min(x.size(), y.size()));
  double mx = 0.0, my = 0.0;
  for (long i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  long best = 0;
  double best_c = -1e300;
  for (long lag = -max_lag; lag <= max_lag; ++lag) {
    double c = 0.0;
    for (long i = std::max(0L, -lag); i < n && i + lag < n; ++i) {
      if (i + lag < 0) continue;
      c += (x[i] - mx) * (y[i + lag] - my);
    }
    if (c > best_c) {
      best_c = c;
      best = lag;
    }
  }
  return best;
}

struct BatteryResult {
  double min_tension = 0.0;
  double min_dissipation_margin = 0.0;
  double loop_area = 0.0;
  long lag = 0;
};

/// One episode on a periodic trajectory: the raised cosine repeated, with a
/// seeded period, frequency and preload so every seed exercises a new point.
inline BatteryResult physics_episode(std::uint64_t seed, const PlantParams& base, const ControlConfig& control) {
  Rng rng(seed);
  PlantParams p = base;
  p.initial_tension = rng.uniform(8.5, 13.0);
  const double vib = 10.0 * static_cast<double>(rng.index(11));
  TrajectorySpec spec;
  spec.kind = TrajectoryKind::sinusoid;
  spec.amplitude = rng.uniform(4.0, 16.0);
  spec.period = rng.uniform(2.0, 5.0);
  spec.duration = 2.0 * spec.period;
  const auto traj = gen_sinusoid(spec);

  InvariantProbe probe;
  probe.decimation = 100;
  run_episode(traj, p, vib, control, &probe);

  BatteryResult r;
  r.min_tension = probe.min_tension;
  r.min_dissipation_margin = probe.min_dissipation_margin;
  // Last full period of the (x_in, x_out) loop.
  const auto per = static_cast<std::size_t>(std::llround(spec.period / (probe.decimation * p.dt_sim)));
  const std::size_t first = probe.x_in.size() > per ? probe.x_in.size() - per : 0;
  const std::vector<double> xi(probe.x_in.begin() + static_cast<std::ptrdiff_t>(first), probe.x_in.end());
  const std::vector<double> xo(probe.x_out.begin() + static_cast<std::ptrdiff_t>(first), probe.x_out.end());
  r.loop_area = loop_area(xi, xo);
  r.lag = peak_lag(probe.x_in, probe.x_out, static_cast<long>(per / 4));
  return r;
}

}  // namespace tsm::testing
