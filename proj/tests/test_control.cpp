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
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "tsm/control.hpp"
#include "tsm/error.hpp"
#include "tsm/trajgen.hpp"

namespace tsm {
namespace {

TEST(MotionGeneratorFn, ConstantWindow) {
  const std::vector<double> w(20, 3.25);
  const auto c = motion_generator(w, 3.25, 1.0 / 55.0, 20);
  EXPECT_DOUBLE_EQ(c.q_d, 3.25);
  EXPECT_DOUBLE_EQ(c.v_ref_motion, 0.0);
}

TEST(MotionGeneratorFn, RampLagsByHalfWindowAndKeepsSlope) {
  const double dt = 1.0 / 55.0;
  const double v = 7.0;
  std::vector<double> ramp(21);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = v * dt * static_cast<double>(i);
  const std::span<const double> all(ramp);
  const auto prev = motion_generator(all.first(20), 0.0, dt, 20);
  const auto cur = motion_generator(all, prev.q_d, dt, 20);
  // Newest sample is index 20; the mean sits (20 - 1) / 2 samples behind it.
  EXPECT_NEAR(cur.q_d, ramp[20] - 9.5 * v * dt, 1e-12);
  EXPECT_NEAR(cur.v_ref_motion, v, 1e-9);
}

TEST(MotionGeneratorFn, ShortWindowThrows) {
  const std::vector<double> w(19, 0.0);
  EXPECT_THROW(motion_generator(w, 0.0, 0.01, 20), InsufficientData);
}

TEST(MotionGeneratorFn, LinearInTheWindow) {
  Rng rng(3);
  std::vector<double> x(20), y(20), z(20);
  const double a = 1.7, b = -0.4;
  for (int i = 0; i < 20; ++i) {
    x[i] = rng.uniform(-5, 5);
    y[i] = rng.uniform(-5, 5);
    z[i] = a * x[i] + b * y[i];
  }
  const double qx = motion_generator(x, 0.0, 0.01, 20).q_d;
  const double qy = motion_generator(y, 0.0, 0.01, 20).q_d;
  EXPECT_NEAR(motion_generator(z, 0.0, 0.01, 20).q_d, a * qx + b * qy, 1e-12);
}

TEST(MotionGeneratorStream, StepRisesOverExactlyWindowSamples) {
  MotionGenerator g(20, 1.0 / 55.0);
  g.prime(0.0);
  std::vector<double> q;
  for (int i = 0; i < 30; ++i) q.push_back(g.push(1.0).q_d);
  for (int i = 0; i < 19; ++i) {
    EXPECT_LT(q[i], 1.0);
    EXPECT_LT(q[i], q[i + 1]);
  }
  for (int i = 19; i < 30; ++i) EXPECT_NEAR(q[i], 1.0, 1e-15);
  for (double v : q) EXPECT_LE(v, 1.0 + 1e-15);
}

TEST(Vibration, CommandIsAngularFrequency) {
  EXPECT_EQ(vibration_command(0.0), 0.0);
  EXPECT_NEAR(vibration_command(70.0), 439.823, 1e-3);
  EXPECT_NEAR(vibration_command(100.0), 628.319, 1e-3);
}

TEST(PidTest, MatchedVelocitiesGiveZero) {
  Pid pid({1.5, 300.0, 0.01}, 200.0);
  EXPECT_EQ(pid.step(4.0, 4.0, 1e-3), 0.0);
}

TEST(PidTest, ProportionalOnly) {
  Pid pid({2.5, 0.0, 0.0}, 200.0);
  for (int i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(pid.step(3.0, 1.0, 1e-3), 5.0);
}

TEST(PidTest, ZeroGainsGiveZero) {
  Pid pid({0.0, 0.0, 0.0}, 200.0);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(pid.step(rng.uniform(-100, 100), rng.uniform(-100, 100), 1e-3), 0.0);
}

TEST(PidTest, IntegralClampedAndOutputSaturated) {
  Pid pid({0.0, 100.0, 0.0}, 50.0);
  double u = 0.0;
  for (int i = 0; i < 100000; ++i) u = pid.step(10.0, 0.0, 1e-3);
  EXPECT_DOUBLE_EQ(u, 50.0);
  EXPECT_DOUBLE_EQ(pid.integral(), 0.5);
  // Anti-windup: one reversed step leaves saturation at once.
  EXPECT_LT(pid.step(-10.0, 0.0, 1e-3), 50.0);
  Pid p2({1e6, 0.0, 0.0}, 50.0);
  EXPECT_DOUBLE_EQ(p2.step(0.0, 1.0, 1e-3), -50.0);
}

TEST(PidTest, DerivativeUsesPreviousError) {
  Pid pid({0.0, 0.0, 0.5}, 1e9);
  EXPECT_EQ(pid.step(1.0, 0.0, 0.1), 0.0);
  EXPECT_DOUBLE_EQ(pid.step(3.0, 0.0, 0.1), 0.5 * (3.0 - 1.0) / 0.1);
  pid.reset();
  EXPECT_EQ(pid.step(5.0, 0.0, 0.1), 0.0);
}

TEST(ControlConfigTest, Validation) {
  ControlConfig c;
  EXPECT_NO_THROW(c.validate());
  c.f_ref = 101.0;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = ControlConfig{};
  c.lpf_window = 0;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = ControlConfig{};
  c.rate_control = 0;
  EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(ControlConfigTest, JsonRoundTrip) {
  ControlConfig c;
  c.pid_motion.kp = 2.25;
  c.lpf_window = 12;
  const auto back = nlohmann::json(c).get<ControlConfig>();
  EXPECT_EQ(back.pid_motion.kp, 2.25);
  EXPECT_EQ(back.lpf_window, 12u);
  EXPECT_EQ(back.rate_control, 1000);
}

TimeSeries sinusoid(double period, double duration) {
  TrajectorySpec s;
  s.kind = TrajectoryKind::sinusoid;
  s.period = period;
  s.duration = duration;
  return gen_sinusoid(s);
}

TEST(Loop, LogLengthAndGrid) {
  const auto traj = sinusoid(2.0, 4.0);
  Plant plant{PlantParams{}};
  const auto log = run_control_loop(traj, plant, ControlConfig{});
  EXPECT_EQ(log.size(), traj.size());
  EXPECT_DOUBLE_EQ(log.dt, 1.0 / 55.0);
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_NEAR(log.t[i], traj.time_at(i), 1e-12);
    EXPECT_EQ(log.q_ref[i], traj[i]);
  }
  // One control tick per millisecond up to the last observation.
  EXPECT_NEAR(static_cast<double>(log.v_ref_control.size()), 1000.0 * log.t.back() + 1.0, 1.0);
}

TEST(Loop, RejectsWrongTrajectoryRate) {
  const TimeSeries t(0.0, 0.01, Unit::millimeter, std::vector<double>(10, 0.0));
  Plant plant{PlantParams{}};
  EXPECT_THROW(run_control_loop(t, plant, ControlConfig{}), InvalidSpec);
}

TEST(Loop, ZeroTrajectoryLogsZero) {
  const TimeSeries zero(0.0, 1.0 / 55.0, Unit::millimeter, std::vector<double>(100, 0.0));
  Plant plant{PlantParams{}};
  const auto log = run_control_loop(zero, plant, ControlConfig{});
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_LT(std::abs(log.q_d[i]), 1e-12);
    EXPECT_LT(std::abs(log.p_meas[i]), 1e-6);
  }
}

TEST(Loop, ReplayIsBitIdentical) {
  const auto traj = gen_random_trajectory(random_spec_for_length(400, 8));
  std::vector<ObservationLog> logs;
  for (int k = 0; k < 2; ++k) {
    Plant plant{PlantParams{}};
    ControlConfig c;
    c.f_ref = 40.0;
    logs.push_back(run_control_loop(traj, plant, c));
  }
  EXPECT_EQ(logs[0].p_meas, logs[1].p_meas);
  EXPECT_EQ(logs[0].T_in, logs[1].T_in);
  EXPECT_EQ(logs[0].T_out, logs[1].T_out);
}

TEST(Loop, VelocityTrackingWithinFivePercent) {
  const auto traj = sinusoid(1.0, 5.0);
  Plant plant{PlantParams{}};
  const auto log = run_control_loop(traj, plant, ControlConfig{});
  // Skip the first second: the moving average is still filling.
  double err = 0.0, ref = 0.0;
  for (std::size_t i = 1000; i < log.v_ref_control.size(); ++i) {
    const double e = log.v_ref_control[i] - log.v_meas_control[i];
    err += e * e;
    ref += log.v_ref_control[i] * log.v_ref_control[i];
  }
  EXPECT_LT(std::sqrt(err / ref), 0.05);
}

TEST(Loop, ProbeSeesEveryPlantStep) {
  struct Counter : PlantProbe {
    std::size_t n = 0;
    void on_step(const PlantState&) override { ++n; }
  } counter;
  const TimeSeries zero(0.0, 1.0 / 55.0, Unit::millimeter, std::vector<double>(56, 0.0));
  Plant plant{PlantParams{}};
  const auto log = run_control_loop(zero, plant, ControlConfig{}, &counter);
  EXPECT_EQ(counter.n, 10 * (log.v_ref_control.size() - 1));
  EXPECT_EQ(plant.state().steps, counter.n);
}

}  // namespace
}  // namespace tsm
