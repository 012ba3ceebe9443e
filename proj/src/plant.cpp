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

#include "tsm/plant.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tsm/error.hpp"

namespace tsm {

double crank_displacement(const CrankSlider& cs) {
  const double s = std::sin(cs.angle);
  return cs.eccentricity * std::cos(cs.angle) +
         std::sqrt(cs.link_length * cs.link_length - cs.eccentricity * cs.eccentricity * s * s);
}

double crank_displacement_slope(const CrankSlider& cs) {
  const double s = std::sin(cs.angle);
  const double c = std::cos(cs.angle);
  const double r = cs.eccentricity;
  const double root = std::sqrt(cs.link_length * cs.link_length - r * r * s * s);
  return -r * s - r * r * s * c / root;
}

namespace {

constexpr double kReferencePreload = 8.5;  // N
// Unit bridge: N / kg = m / s^2 = 1000 mm / s^2.
constexpr double kMmPerMeter = 1000.0;
constexpr double kDivergenceBound = 1e4;  // mm or mm/s

}  // namespace

void PlantParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidConfig(std::string("plant parameter ") + name + " must be positive");
  };
  positive(k_t, "k_t");
  positive(k_s, "k_s");
  positive(m_out, "m_out");
  positive(dt_sim, "dt_sim");
  positive(spring_max_force, "spring_max_force");
  positive(lugre.sigma0, "lugre.sigma0");
  positive(lugre.coulomb, "lugre.coulomb");
  positive(lugre.stribeck_velocity, "lugre.stribeck_velocity");
  if (c_t < 0.0 || lugre.sigma1 < 0.0 || lugre.sigma2 < 0.0) {
    throw InvalidConfig("plant damping coefficients must be non-negative");
  }
  if (lugre.stiction < lugre.coulomb) throw InvalidConfig("lugre.stiction must be >= lugre.coulomb");
  if (initial_tension < 0.0) throw InvalidConfig("initial_tension must be non-negative");
  if (!(crank_link_length > crank_eccentricity && crank_eccentricity > 0.0)) {
    throw InvalidConfig("crank geometry needs link_length > eccentricity > 0");
  }
  if (dt_sim > 1e-4 + 1e-15) throw InvalidConfig("dt_sim must not exceed 1e-4 s");
  if (friction_scale() <= 0.0) throw InvalidConfig("tension_friction_gain yields a non-positive friction scale");
}

double PlantParams::friction_scale() const {
  return 1.0 + tension_friction_gain * (initial_tension / kReferencePreload - 1.0);
}

void to_json(nlohmann::json& j, const LugreParams& p) {
  j = nlohmann::json{{"sigma0_n_per_mm", p.sigma0},          {"sigma1_ns_per_mm", p.sigma1},
                     {"sigma2_ns_per_mm", p.sigma2},          {"coulomb_n", p.coulomb},
                     {"stiction_n", p.stiction},              {"stribeck_velocity_mm_s", p.stribeck_velocity}};
}

void from_json(const nlohmann::json& j, LugreParams& p) {
  p.sigma0 = j.value("sigma0_n_per_mm", p.sigma0);
  p.sigma1 = j.value("sigma1_ns_per_mm", p.sigma1);
  p.sigma2 = j.value("sigma2_ns_per_mm", p.sigma2);
  p.coulomb = j.value("coulomb_n", p.coulomb);
  p.stiction = j.value("stiction_n", p.stiction);
  p.stribeck_velocity = j.value("stribeck_velocity_mm_s", p.stribeck_velocity);
}

void to_json(nlohmann::json& j, const PlantParams& p) {
  j = nlohmann::json{{"k_t_n_per_mm", p.k_t},
                     {"c_t_ns_per_mm", p.c_t},
                     {"k_s_n_per_mm", p.k_s},
                     {"spring_max_force_n", p.spring_max_force},
                     {"initial_tension_n", p.initial_tension},
                     {"m_out_kg", p.m_out},
                     {"tension_friction_gain", p.tension_friction_gain},
                     {"lugre", p.lugre},
                     {"crank_eccentricity_mm", p.crank_eccentricity},
                     {"crank_link_length_mm", p.crank_link_length},
                     {"dt_sim_s", p.dt_sim}};
}

void from_json(const nlohmann::json& j, PlantParams& p) {
  p.k_t = j.value("k_t_n_per_mm", p.k_t);
  p.c_t = j.value("c_t_ns_per_mm", p.c_t);
  p.k_s = j.value("k_s_n_per_mm", p.k_s);
  p.spring_max_force = j.value("spring_max_force_n", p.spring_max_force);
  p.initial_tension = j.value("initial_tension_n", p.initial_tension);
  p.m_out = j.value("m_out_kg", p.m_out);
  p.tension_friction_gain = j.value("tension_friction_gain", p.tension_friction_gain);
  if (j.contains("lugre")) j.at("lugre").get_to(p.lugre);
  p.crank_eccentricity = j.value("crank_eccentricity_mm", p.crank_eccentricity);
  p.crank_link_length = j.value("crank_link_length_mm", p.crank_link_length);
  p.dt_sim = j.value("dt_sim_s", p.dt_sim);
}

PlantState equilibrium_state(const PlantParams& params) {
  PlantState s;
  s.theta = kCrankRestAngle;
  s.T_in = params.initial_tension;
  s.T_out = std::min(params.initial_tension, params.spring_max_force);
  return s;
}

PlantState step(const PlantState& state, const PlantParams& p, double u_in_velocity, double vib_omega) {
  PlantState s = state;
  const double dt = p.dt_sim;
  const LugreParams& lg = p.lugre;
  const double scale = p.friction_scale();

  s.v_in = u_in_velocity;
  s.x_in += u_in_velocity * dt;
  s.omega = vib_omega;
  s.theta = std::fmod(s.theta + vib_omega * dt, 2.0 * std::numbers::pi);
  if (s.theta < 0.0) s.theta += 2.0 * std::numbers::pi;
  const CrankSlider crank{p.crank_eccentricity, p.crank_link_length, s.theta};
  const CrankSlider rest{p.crank_eccentricity, p.crank_link_length, kCrankRestAngle};
  s.x_vib = crank_displacement(crank) - crank_displacement(rest);
  s.v_vib = crank_displacement_slope(crank) * vib_omega;

  const double v = state.v_out;
  const double dv = v / lg.stribeck_velocity;
  const double g = scale * (lg.coulomb + (lg.stiction - lg.coulomb) * std::exp(-dv * dv));

  double spring = p.initial_tension + p.k_s * state.x_out;
  s.spring_saturated = spring > p.spring_max_force;
  spring = std::min(spring, p.spring_max_force);

  const double stretch = s.x_in + s.x_vib - state.x_out;
  const double tension_known = p.initial_tension + p.k_t * stretch + p.c_t * (s.v_in + s.v_vib);
  const double bristle_explicit = -lg.sigma0 * state.z + lg.sigma1 * lg.sigma0 * std::abs(v) * state.z / g;
  const double gain = dt * kMmPerMeter / p.m_out;

  double v_new = (v + gain * (tension_known - spring + bristle_explicit)) /
                 (1.0 + gain * (p.c_t + lg.sigma1 + lg.sigma2));
  if (tension_known - p.c_t * v_new < 0.0) {
    // Slack tendon: it cannot push, so the damper is disengaged too.
    v_new = (v + gain * (-spring + bristle_explicit)) / (1.0 + gain * (lg.sigma1 + lg.sigma2));
  }

  s.v_out = v_new;
  s.x_out = state.x_out + v_new * dt;

  const double dv_new = v_new / lg.stribeck_velocity;
  const double g_new = scale * (lg.coulomb + (lg.stiction - lg.coulomb) * std::exp(-dv_new * dv_new));
  s.z = (state.z + dt * v_new) / (1.0 + dt * lg.sigma0 * std::abs(v_new) / g_new);
  const double z_dot = (s.z - state.z) / dt;
  s.friction = lg.sigma0 * s.z + lg.sigma1 * z_dot + lg.sigma2 * v_new;
  s.dissipation = state.dissipation + s.friction * v_new * dt;

  const double tension =
      p.initial_tension + p.k_t * (s.x_in + s.x_vib - s.x_out) + p.c_t * (s.v_in + s.v_vib - s.v_out);
  s.T_in = std::max(0.0, tension);
  s.T_out = std::clamp(p.initial_tension + p.k_s * s.x_out, 0.0, p.spring_max_force);
  s.steps = state.steps + 1;

  if (!std::isfinite(s.x_out) || !std::isfinite(s.v_out) || !std::isfinite(s.z) || std::abs(s.x_out) > kDivergenceBound ||
      std::abs(s.v_out) > kDivergenceBound * 10.0) {
    throw SimulationDiverged(s.steps, "output state left the finite range");
  }
  return s;
}

Plant::Plant(PlantParams params) : params_(params) {
  params_.validate();
  reset();
}

void Plant::reset() { state_ = equilibrium_state(params_); }

}  // namespace tsm
