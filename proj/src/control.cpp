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

#include "tsm/control.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "tsm/error.hpp"

namespace tsm {

void ControlConfig::validate() const {
  if (rate_motion <= 0 || rate_control <= 0 || rate_obs <= 0) throw InvalidConfig("loop rates must be positive");
  if (lpf_window < 1) throw InvalidConfig("lpf_window must be at least 1");
  if (f_ref < 0.0 || f_ref > 100.0) throw InvalidConfig("f_ref must lie in [0, 100] Hz");
  if (!(motion_motor.time_constant > 0.0) || !(vib_motor.time_constant > 0.0)) {
    throw InvalidConfig("motor time constants must be positive");
  }
  if (!(motion_motor.velocity_limit > 0.0) || !(vib_motor.velocity_limit > 0.0)) {
    throw InvalidConfig("actuator limits must be positive");
  }
}

void to_json(nlohmann::json& j, const PidGains& g) { j = nlohmann::json{{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}}; }

void from_json(const nlohmann::json& j, PidGains& g) {
  g.kp = j.value("kp", g.kp);
  g.ki = j.value("ki", g.ki);
  g.kd = j.value("kd", g.kd);
}

void to_json(nlohmann::json& j, const MotorModel& m) {
  j = nlohmann::json{{"time_constant_s", m.time_constant}, {"velocity_limit", m.velocity_limit}};
}

void from_json(const nlohmann::json& j, MotorModel& m) {
  m.time_constant = j.value("time_constant_s", m.time_constant);
  m.velocity_limit = j.value("velocity_limit", m.velocity_limit);
}

void to_json(nlohmann::json& j, const ControlConfig& c) {
  j = nlohmann::json{{"rate_motion_hz", c.rate_motion}, {"rate_control_hz", c.rate_control},
                     {"rate_obs_hz", c.rate_obs},       {"lpf_window", c.lpf_window},
                     {"pid_motion", c.pid_motion},      {"pid_vib", c.pid_vib},
                     {"motion_motor", c.motion_motor},  {"vib_motor", c.vib_motor},
                     {"f_ref_hz", c.f_ref}};
}

void from_json(const nlohmann::json& j, ControlConfig& c) {
  c.rate_motion = j.value("rate_motion_hz", c.rate_motion);
  c.rate_control = j.value("rate_control_hz", c.rate_control);
  c.rate_obs = j.value("rate_obs_hz", c.rate_obs);
  c.lpf_window = j.value("lpf_window", c.lpf_window);
  if (j.contains("pid_motion")) j.at("pid_motion").get_to(c.pid_motion);
  if (j.contains("pid_vib")) j.at("pid_vib").get_to(c.pid_vib);
  if (j.contains("motion_motor")) j.at("motion_motor").get_to(c.motion_motor);
  if (j.contains("vib_motor")) j.at("vib_motor").get_to(c.vib_motor);
  c.f_ref = j.value("f_ref_hz", c.f_ref);
}

MotionCommand motion_generator(std::span<const double> q_ref_window, double previous_q_d, double dt,
                               std::size_t expected_window) {
  if (q_ref_window.size() < expected_window || q_ref_window.empty()) {
    throw InsufficientData("motion generator needs " + std::to_string(expected_window) + " samples of history, got " +
                           std::to_string(q_ref_window.size()));
  }
  const auto w = q_ref_window.last(expected_window);
  const double q_d = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  return {q_d, (q_d - previous_q_d) / dt};
}

MotionGenerator::MotionGenerator(std::size_t window, double dt) : window_(window), dt_(dt) {
  if (window_ < 1) throw InvalidConfig("motion generator window must be at least 1");
}

void MotionGenerator::prime(double q_ref0) {
  history_.assign(window_, q_ref0);
  previous_q_d_ = q_ref0;
  primed_ = true;
}

MotionCommand MotionGenerator::push(double q_ref) {
  if (!primed_) prime(q_ref);
  history_.pop_front();
  history_.push_back(q_ref);
  const std::vector<double> w(history_.begin(), history_.end());
  const auto cmd = motion_generator(w, previous_q_d_, dt_, window_);
  previous_q_d_ = cmd.q_d;
  return cmd;
}

double vibration_command(double f_ref) { return 2.0 * std::numbers::pi * f_ref; }

Pid::Pid(PidGains gains, double output_limit) : gains_(gains), limit_(output_limit) {}

double Pid::step(double v_ref, double v_meas, double dt) {
  const double e = v_ref - v_meas;
  integral_ += e * dt;
  if (gains_.ki != 0.0) {
    const double bound = limit_ / std::abs(gains_.ki);
    integral_ = std::clamp(integral_, -bound, bound);
  }
  const double derivative = has_previous_ ? (e - previous_error_) / dt : 0.0;
  previous_error_ = e;
  has_previous_ = true;
  const double u = gains_.kp * e + gains_.ki * integral_ + gains_.kd * derivative;
  return std::clamp(u, -limit_, limit_);
}

void Pid::reset() {
  integral_ = 0.0;
  previous_error_ = 0.0;
  has_previous_ = false;
}

TimeSeries ObservationLog::series(const std::vector<double>& column, Unit unit) const {
  return TimeSeries(0.0, dt, unit, column);
}

ObservationLog run_control_loop(const TimeSeries& traj, Plant& plant, const ControlConfig& config,
                                PlantProbe* probe) {
  config.validate();
  const double motion_dt = 1.0 / config.rate_motion;
  if (std::abs(traj.dt() - motion_dt) > 1e-9 * motion_dt) {
    throw InvalidSpec("trajectory must be sampled at the motion rate (" + std::to_string(config.rate_motion) + " Hz)");
  }
  const double control_dt = 1.0 / config.rate_control;
  const double substeps_exact = control_dt / plant.params().dt_sim;
  const auto substeps = static_cast<std::size_t>(std::llround(substeps_exact));
  if (substeps == 0 || std::abs(substeps_exact - static_cast<double>(substeps)) > 1e-6) {
    throw InvalidConfig("control period must be an integer multiple of dt_sim");
  }

  // Integer time base in which every loop period is a whole number of ticks.
  const long long base = std::lcm(std::lcm(static_cast<long long>(config.rate_motion),
                                           static_cast<long long>(config.rate_control)),
                                  static_cast<long long>(config.rate_obs));
  const long long motion_period = base / config.rate_motion;
  const long long control_period = base / config.rate_control;
  const long long obs_period = base / config.rate_obs;

  const std::size_t n = traj.size();
  ObservationLog log;
  log.dt = 1.0 / config.rate_obs;
  log.t.reserve(n);
  log.q_ref.reserve(n);
  log.q_d.reserve(n);
  log.p_meas.reserve(n);
  log.T_in.reserve(n);
  log.T_out.reserve(n);

  MotionGenerator generator(config.lpf_window, motion_dt);
  generator.prime(plant.state().x_in);
  Pid pid_motion(config.pid_motion, config.motion_motor.velocity_limit);
  Pid pid_vib(config.pid_vib, config.vib_motor.velocity_limit);
  const double omega_ref = vibration_command(config.f_ref);

  const double dt_sim = plant.params().dt_sim;
  const double motion_alpha = 1.0 - std::exp(-dt_sim / config.motion_motor.time_constant);
  const double vib_alpha = 1.0 - std::exp(-dt_sim / config.vib_motor.time_constant);

  double motor_velocity = plant.state().v_in;
  double crank_speed = plant.state().omega;
  double motion_cmd = 0.0;
  double vib_cmd = 0.0;
  double v_ref = 0.0;
  double q_d = plant.state().x_in;
  double q_ref_current = traj[0];

  std::size_t k_motion = 0;
  long long j_control = 0;
  std::size_t i_obs = 0;

  while (i_obs < n) {
    const long long t_motion = k_motion < n ? static_cast<long long>(k_motion) * motion_period : -1;
    const long long t_control = j_control * control_period;
    const long long t_obs = static_cast<long long>(i_obs) * obs_period;

    if (t_motion >= 0 && t_motion <= t_control && t_motion <= t_obs) {
      q_ref_current = traj[k_motion];
      const auto cmd = generator.push(q_ref_current);
      q_d = cmd.q_d;
      v_ref = cmd.v_ref_motion;
      ++k_motion;
    } else if (t_control <= t_obs) {
      if (j_control > 0) {
        for (std::size_t s = 0; s < substeps; ++s) {
          motor_velocity += (motion_cmd - motor_velocity) * motion_alpha;
          crank_speed += (vib_cmd - crank_speed) * vib_alpha;
          plant.advance(motor_velocity, crank_speed);
          if (probe) probe->on_step(plant.state());
        }
      }
      motion_cmd = pid_motion.step(v_ref, motor_velocity, control_dt);
      vib_cmd = pid_vib.step(omega_ref, crank_speed, control_dt);
      log.v_ref_control.push_back(v_ref);
      log.v_meas_control.push_back(motor_velocity);
      ++j_control;
    } else {
      const auto& st = plant.state();
      log.t.push_back(static_cast<double>(t_obs) / static_cast<double>(base));
      log.q_ref.push_back(q_ref_current);
      log.q_d.push_back(q_d);
      log.p_meas.push_back(st.x_out);
      log.T_in.push_back(st.T_in);
      log.T_out.push_back(st.T_out);
      ++i_obs;
    }
  }
  return log;
}

Episode run_episode(const TimeSeries& traj_cmd, const PlantParams& params, double vib_freq, ControlConfig control,
                    PlantProbe* probe) {
  if (vib_freq < 0.0 || vib_freq > 100.0) throw InvalidConfig("vibration frequency must lie in [0, 100] Hz");
  control.f_ref = vib_freq;
  Plant plant(params);
  auto log = run_control_loop(traj_cmd, plant, control, probe);
  auto p_meas = log.series(log.p_meas, Unit::millimeter);
  auto t_in = log.series(log.T_in, Unit::newton);
  auto t_out = log.series(log.T_out, Unit::newton);
  return {std::move(log), std::move(p_meas), std::move(t_in), std::move(t_out)};
}

}  // namespace tsm
