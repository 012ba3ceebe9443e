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
#include <deque>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsm/plant.hpp"
#include "tsm/signals.hpp"

namespace tsm {

struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
};

/// First-order velocity servo standing in for a motor and its driver.
struct MotorModel {
  double time_constant = 0.002;  // s
  double velocity_limit = 200.0; // actuator command saturation, in the loop's unit
};

struct ControlConfig {
  int rate_motion = 55;     // Hz
  int rate_control = 1000;  // Hz
  int rate_obs = 55;        // Hz
  std::size_t lpf_window = 20;
  PidGains pid_motion{1.5, 300.0, 0.0};
  PidGains pid_vib{1.0, 100.0, 0.0};
  MotorModel motion_motor{0.002, 200.0};   // mm/s
  MotorModel vib_motor{0.005, 700.0};      // rad/s
  double f_ref = 0.0;       // Hz

  void validate() const;
};

void to_json(nlohmann::json& j, const PidGains& g);
void from_json(const nlohmann::json& j, PidGains& g);
void to_json(nlohmann::json& j, const MotorModel& m);
void from_json(const nlohmann::json& j, MotorModel& m);
void to_json(nlohmann::json& j, const ControlConfig& c);
void from_json(const nlohmann::json& j, ControlConfig& c);

struct MotionCommand {
  double q_d = 0.0;           // mm
  double v_ref_motion = 0.0;  // mm/s
};

/// Moving average of the window, differentiated against the previous
/// filtered value. Throws InsufficientData if the window is shorter than
/// `expected_window`.
MotionCommand motion_generator(std::span<const double> q_ref_window, double previous_q_d, double dt,
                               std::size_t expected_window);

/// Streaming form: keeps the last `window` references and the previous output.
/// The history is pre-filled with the first reference it is primed with.
class MotionGenerator {
 public:
  MotionGenerator(std::size_t window, double dt);

  void prime(double q_ref0);
  MotionCommand push(double q_ref);

 private:
  std::size_t window_;
  double dt_;
  std::deque<double> history_;
  double previous_q_d_ = 0.0;
  bool primed_ = false;
};

/// One crank revolution per vibration cycle.
double vibration_command(double f_ref);

/// PID on velocity. The integral is clamped so ki * integral never exceeds
/// the output limit; the output itself is saturated at +-limit.
class Pid {
 public:
  Pid(PidGains gains, double output_limit);

  double step(double v_ref, double v_meas, double dt);
  void reset();
  double integral() const noexcept { return integral_; }

 private:
  PidGains gains_;
  double limit_;
  double integral_ = 0.0;
  double previous_error_ = 0.0;
  bool has_previous_ = false;
};

/// Aligned per-observation record of one closed-loop run.
struct ObservationLog {
  double dt = 0.0;
  std::vector<double> t, q_ref, q_d, p_meas, T_in, T_out;
  // Diagnostics collected at the control rate.
  std::vector<double> v_ref_control, v_meas_control;

  std::size_t size() const noexcept { return t.size(); }
  TimeSeries series(const std::vector<double>& column, Unit unit) const;
};

/// Optional per-step hook for the plant, called after each integration step.
struct PlantProbe {
  virtual ~PlantProbe() = default;
  virtual void on_step(const PlantState& state) = 0;
};

/// Event-ordered co-simulation: motion generator at rate_motion, PID and
/// plant substeps at rate_control, observation at rate_obs. Events sharing a
/// timestamp run in the order motion, control, observation. The control tick
/// at time t first integrates the plant up to t with the previous command.
ObservationLog run_control_loop(const TimeSeries& traj, Plant& plant, const ControlConfig& config,
                                PlantProbe* probe = nullptr);

struct Episode {
  ObservationLog log;
  TimeSeries p_meas;
  TimeSeries T_in;
  TimeSeries T_out;
};

/// Fresh plant at equilibrium, one closed-loop run at vib_freq (overrides
/// control.f_ref); outputs sampled on the trajectory grid.
Episode run_episode(const TimeSeries& traj_cmd, const PlantParams& params, double vib_freq, ControlConfig control,
                    PlantProbe* probe = nullptr);

}  // namespace tsm
