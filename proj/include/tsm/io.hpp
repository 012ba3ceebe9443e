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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsm/control.hpp"
#include "tsm/signals.hpp"
#include "tsm/tcn.hpp"

namespace tsm::io {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames it over `path`, so
/// readers never observe a partial file.
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest round-trip decimal form; identical bits give identical text.
std::string format_number(double v);

/// Column-oriented CSV; every column must have the same length.
std::string csv(const std::vector<std::string>& header, const std::vector<std::span<const double>>& columns);

/// t_s,pos_mm
std::string trajectory_csv(const TimeSeries& traj);
/// t_s,p_cmd_mm,p_meas_mm,T_in_N,T_out_N
std::string episode_csv(const TimeSeries& p_cmd, const Episode& episode);
/// t_s,q_ref_mm,q_d_mm,p_meas_mm,T_in_N,T_out_N
std::string log_csv(const ObservationLog& log);
/// epoch,train_mse,val_mse
std::string curve_csv(const std::vector<EpochRecord>& curve);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool markers = false;
  int width = 720;
  int height = 420;
};

/// Self-contained SVG line chart with axes, ticks and a legend.
std::string svg_plot(const std::vector<PlotSeries>& series, const PlotOptions& options);

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;  // argv after the program name; replaying them reruns the command
  std::string config_path;
  std::string config_hash;  // FNV-1a of the config file bytes, hex
  nlohmann::json seeds = nlohmann::json::object();
  std::string out_dir;
  std::string version;
  double wall_seconds = 0.0;
  nlohmann::json extra = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const RunManifest& m);

}  // namespace tsm::io
