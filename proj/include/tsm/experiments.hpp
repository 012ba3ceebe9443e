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
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsm/control.hpp"
#include "tsm/plant.hpp"
#include "tsm/signals.hpp"
#include "tsm/tcn.hpp"
#include "tsm/trajgen.hpp"

namespace tsm {

enum class Condition { no_vib, vib };

std::string_view to_string(Condition c);
/// Accepts "vib", "no-vib" and "no_vib".
Condition parse_condition(std::string_view text);

struct SizeTier {
  std::size_t target = 0;              // nominal parameter count
  std::vector<std::size_t> channels;   // frozen channel plan
};

struct SinusoidCell {
  double initial_tension = 8.5;  // N
  double period = 10.0;          // s
};

/// Everything an experiment reads. Loaded from one JSON document; every
/// field has a default so a partial file is valid.
struct ExperimentConfig {
  PlantParams plant;
  ControlConfig control;
  double segment_duration = 2.0;  // s

  std::size_t dataset_size = 15000;
  std::size_t train_size = 12000;
  double dataset_vib_freq = 70.0;  // Hz
  std::uint64_t dataset_seed = 1;

  std::vector<double> sweep_freqs{0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  std::size_t sweep_length = 3300;
  std::uint64_t sweep_seed = 7;

  double sinusoid_amplitude = 16.0;  // mm
  double sinusoid_vib_freq = 33.0;   // Hz
  std::size_t sinusoid_cycles = 3;
  std::vector<SinusoidCell> sinusoid_cells{{9.0, 10.0}, {13.0, 10.0}, {8.5, 5.0}, {8.5, 20.0}};

  TcnConfig tcn;  // channels and seed are overridden per run
  std::vector<SizeTier> tiers;
  std::vector<std::uint64_t> training_seeds{0, 1, 2};

  std::size_t compensation_length = 3500;
  std::uint64_t compensation_seed = 1001;

  void validate() const;
  const SizeTier& tier(std::size_t target) const;
  TcnConfig tcn_for(const SizeTier& tier, std::uint64_t seed) const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Default configuration with tiers filled from channels_for_target.
ExperimentConfig default_experiment_config();

/// Worker count: TSM_DITHER_THREADS when set and positive, otherwise the
/// hardware concurrency, never more than `jobs`.
std::size_t worker_count(std::size_t jobs);

/// Runs job(i) for i in [0, n) on a pool; results are keyed by index so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& job);

struct Assertion {
  std::string name;
  bool passed = false;
  std::string detail;
};

void to_json(nlohmann::json& j, const Assertion& a);

/// Experiment output. Simulator numbers and published reference values are
/// kept in separate fields and never compared for equality.
struct ExperimentReport {
  std::string experiment;
  nlohmann::json simulated = nlohmann::json::object();
  nlohmann::json reference = nlohmann::json::object();
  std::vector<Assertion> assertions;
  nlohmann::json manifest = nlohmann::json::object();

  bool all_passed() const;
  void check(std::string name, bool passed, std::string detail);
  nlohmann::json to_json() const;
};

// Published hardware values, reported next to simulator output only.
namespace reference {
struct SweepRow {
  double freq, rmse, std, norm_corr;
};
extern const std::vector<SweepRow> kFreqSweep;
inline constexpr double kSweepBaselineRmse = 2.2345;
inline constexpr double kSweepBestRmse = 1.7113;
inline constexpr double kSweepBestImprovement = 0.2341;
inline constexpr double kGainImprovementMax = 0.346;
inline constexpr double kGainImprovementPosition = 0.3379;
inline constexpr double kMseNoVibMean = 0.1596;
inline constexpr double kMseNoVibStd = 0.091;
inline constexpr double kMseVibMean = 0.082;
inline constexpr double kMseVibStd = 0.048;
inline constexpr std::size_t kTierTargets[4] = {354, 1282, 4866, 18946};
struct CompensationRow {
  const char* label;
  double mae, std;
};
extern const std::vector<CompensationRow> kCompensation;
}  // namespace reference

/// Measured/commanded pairs of one condition on the shared trajectory.
struct Dataset {
  Condition condition = Condition::no_vib;
  double vib_freq = 0.0;
  TimeSeries p_cmd;
  TimeSeries p_meas;
  std::size_t n_train = 0;

  WindowedDataset train_windows(std::size_t seq_len) const;
  /// Validation windows may reach back into the training segment for history.
  WindowedDataset val_windows(std::size_t seq_len) const;
};

struct DatasetPair {
  Dataset no_vib;
  Dataset vib;
  const Dataset& get(Condition c) const { return c == Condition::vib ? vib : no_vib; }
};

DatasetPair build_datasets(const ExperimentConfig& config);

struct SweepRow {
  double freq = 0.0;
  MetricReport metrics;
  double residual_std = 0.0;
};

struct FreqSweepResult {
  TimeSeries trajectory;
  std::vector<SweepRow> rows;
  std::vector<TimeSeries> outputs;  // p_meas per row
};

FreqSweepResult freq_sweep(const ExperimentConfig& config);
ExperimentReport report(const FreqSweepResult& result, const ExperimentConfig& config);

struct SinusoidRun {
  SinusoidCell cell;
  double vib_freq = 0.0;
  PhaseGain phase;
  double position_loop_area = 0.0;  // mm^2 over the last cycle
  double tension_loop_area = 0.0;   // N^2 over the last cycle
  TimeSeries reference;
  Episode episode;
};

struct SinusoidStudyResult {
  std::vector<SinusoidRun> runs;  // cell-major, vibration off then on
};

SinusoidStudyResult sinusoid_study(const ExperimentConfig& config);
ExperimentReport report(const SinusoidStudyResult& result, const ExperimentConfig& config);

struct TrainingRun {
  std::size_t tier = 0;  // target count
  Condition condition = Condition::no_vib;
  std::uint64_t seed = 0;
  std::size_t exact_params = 0;
  std::size_t formula_params = 0;
  TrainResult result;
};

/// One training run on the given dataset condition.
TrainingRun train_tier(const ExperimentConfig& config, const DatasetPair& data, const SizeTier& tier,
                       Condition condition, std::uint64_t seed,
                       const std::function<void(const EpochRecord&)>& on_epoch = {});

struct AblationCell {
  std::size_t tier = 0;
  Condition condition = Condition::no_vib;
  double mean_val_mse = 0.0;
  double std_val_mse = 0.0;  // population std across seeds
};

struct AblationResult {
  std::vector<TrainingRun> runs;  // tier-major, then condition, then seed
  std::vector<AblationCell> cells;
  const AblationCell& cell(std::size_t tier, Condition c) const;
  const TrainingRun& run(std::size_t tier, Condition c, std::uint64_t seed) const;
};

AblationResult ablate(const ExperimentConfig& config, const DatasetPair& data);
ExperimentReport report(const AblationResult& result, const ExperimentConfig& config);

struct CompensationRun {
  std::size_t tier = 0;
  Condition condition = Condition::no_vib;
  ErrorStats uncompensated;
  ErrorStats compensated;
  TimeSeries desired;
  TimeSeries command;
  TimeSeries measured_uncompensated;
  TimeSeries measured_compensated;
};

/// Unseen trajectory used for deployment.
TimeSeries compensation_trajectory(const ExperimentConfig& config);

/// Feeds windows of the desired trajectory through the inverse model and
/// runs the resulting commands under `condition`. Throws ConfigurationError
/// when the model was trained on the other condition.
CompensationRun compensate(const ExperimentConfig& config, const TcnModel& model, Condition trained_on,
                           Condition condition, std::size_t tier);

struct CompensationResult {
  std::vector<CompensationRun> runs;
  const CompensationRun& run(std::size_t tier, Condition c) const;
};

/// Deploys the first-seed model of every tier and condition.
CompensationResult compensate_all(const ExperimentConfig& config, const AblationResult& ablation);
ExperimentReport report(const CompensationResult& result, const ExperimentConfig& config);

/// Input travel needed before the output breaks away from rest under a slow
/// ramp: the crank spins up for `settle` seconds, then the carriage moves
/// at `ramp_velocity` until the 0.1 s mean of x_out has risen by `threshold`.
double breakaway_displacement(const PlantParams& params, double vib_freq, double ramp_velocity = 0.2,
                              double threshold = 0.08, double settle = 0.5);

}  // namespace tsm
