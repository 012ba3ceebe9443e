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

#include <nlohmann/json.hpp>

namespace tsm {

/// Eccentric crank driving a slider; r is the eccentricity, l the link length.
struct CrankSlider {
  double eccentricity = 0.2;  // mm
  double link_length = 7.2;   // mm
  double angle = 0.0;         // rad
};

/// x = r cos(theta) + sqrt(l^2 - r^2 sin^2(theta)).
double crank_displacement(const CrankSlider& cs);

/// dx/dtheta of crank_displacement.
double crank_displacement_slope(const CrankSlider& cs);

struct LugreParams {
  double sigma0 = 100.0;            // N/mm, bristle stiffness
  double sigma1 = 0.02;             // N s/mm, bristle damping
  double sigma2 = 0.1;              // N s/mm, viscous
  double coulomb = 4.0;             // N
  double stiction = 5.0;            // N
  double stribeck_velocity = 1.0;   // mm/s
};

struct PlantParams {
  double k_t = 10.0;                // N/mm, lumped tendon stiffness
  double c_t = 0.05;                // N s/mm, tendon damping
  double k_s = 1.08;                // N/mm, output spring
  double spring_max_force = 30.0;   // N
  double initial_tension = 8.5;     // N
  double m_out = 0.01;              // kg
  /// Relative friction increase per unit relative preload above 8.5 N.
  double tension_friction_gain = 0.05;
  LugreParams lugre;
  double crank_eccentricity = 0.2;  // mm
  double crank_link_length = 7.2;   // mm
  double dt_sim = 1e-4;             // s

  void validate() const;

  /// Multiplier applied to the Coulomb and stiction levels for the current preload.
  double friction_scale() const;
};

void to_json(nlohmann::json& j, const LugreParams& p);
void from_json(const nlohmann::json& j, LugreParams& p);
void to_json(nlohmann::json& j, const PlantParams& p);
void from_json(const nlohmann::json& j, PlantParams& p);

struct PlantState {
  double x_in = 0.0;      // mm, input carriage
  double v_in = 0.0;      // mm/s
  double theta = 0.0;     // rad, crank angle
  double omega = 0.0;     // rad/s, crank speed
  double x_vib = 0.0;     // mm, slider offset from mid-stroke
  double v_vib = 0.0;     // mm/s
  double x_out = 0.0;     // mm
  double v_out = 0.0;     // mm/s
  double z = 0.0;         // mm, LuGre bristle deflection
  double T_in = 0.0;      // N
  double T_out = 0.0;     // N
  double friction = 0.0;  // N, last LuGre force
  double dissipation = 0.0;  // N mm, running sum of F v dt
  std::size_t steps = 0;
  bool spring_saturated = false;
};

/// Crank angle at which the slider is at mid-stroke; vibration displacement
/// is measured from here so a crank at rest injects nothing.
inline constexpr double kCrankRestAngle = 1.5707963267948966;

/// Relaxed state at zero displacement: tendon tension equals the preload.
PlantState equilibrium_state(const PlantParams& params);

/// One semi-implicit Euler step of dt_sim. The input carriage moves at
/// u_in_velocity and the crank turns at vib_omega; the output mass is driven
/// by tendon tension against the preloaded spring and sheath friction.
/// Damping terms and the bristle relaxation are treated implicitly.
PlantState step(const PlantState& state, const PlantParams& params, double u_in_velocity, double vib_omega);

/// Stateful wrapper used by the co-simulation loop.
class Plant {
 public:
  explicit Plant(PlantParams params);

  const PlantParams& params() const noexcept { return params_; }
  const PlantState& state() const noexcept { return state_; }
  void reset();
  void advance(double u_in_velocity, double vib_omega) { state_ = step(state_, params_, u_in_velocity, vib_omega); }

 private:
  PlantParams params_;
  PlantState state_;
};

}  // namespace tsm
