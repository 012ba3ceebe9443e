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

#include "tsm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include "tsm/error.hpp"

namespace tsm {

std::string_view to_string(Condition c) { return c == Condition::vib ? "vib" : "no-vib"; }

Condition parse_condition(std::string_view text) {
  if (text == "vib") return Condition::vib;
  if (text == "no-vib" || text == "no_vib") return Condition::no_vib;
  throw InvalidConfig("unknown condition '" + std::string(text) + "' (expected vib or no-vib)");
}

void ExperimentConfig::validate() const {
  plant.validate();
  control.validate();
  if (!(segment_duration > 0.0)) throw InvalidConfig("segment_duration must be positive");
  if (train_size == 0 || train_size >= dataset_size) throw InvalidConfig("train_size must lie in (0, dataset_size)");
  if (dataset_vib_freq <= 0.0 || dataset_vib_freq > 100.0) throw InvalidConfig("dataset_vib_freq must lie in (0, 100] Hz");
  if (sweep_freqs.empty() || sweep_freqs.front() != 0.0) throw InvalidConfig("sweep_freqs must start at 0 Hz");
  for (double f : sweep_freqs) {
    if (f < 0.0 || f > 100.0) throw InvalidConfig("sweep frequencies must lie in [0, 100] Hz");
  }
  if (sinusoid_cycles < 2) throw InvalidConfig("sinusoid_cycles must be at least 2");
  if (training_seeds.empty()) throw InvalidConfig("training_seeds must not be empty");
  if (compensation_seed == dataset_seed) throw InvalidConfig("compensation_seed must differ from dataset_seed");
  if (compensation_length <= tcn.seq_len) throw InvalidConfig("compensation_length must exceed seq_len");
  for (const auto& t : tiers) tcn_for(t, 0).validate();
}

const SizeTier& ExperimentConfig::tier(std::size_t target) const {
  for (const auto& t : tiers) {
    if (t.target == target) return t;
  }
  throw InvalidConfig("no size tier with target " + std::to_string(target));
}

TcnConfig ExperimentConfig::tcn_for(const SizeTier& t, std::uint64_t seed) const {
  TcnConfig c = tcn;
  c.channels = t.channels;
  c.seed = seed;
  return c;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json tiers = nlohmann::json::array();
  for (const auto& t : c.tiers) tiers.push_back({{"target", t.target}, {"channels", t.channels}});
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& s : c.sinusoid_cells) cells.push_back({{"initial_tension_n", s.initial_tension}, {"period_s", s.period}});
  j = nlohmann::json{
      {"plant", c.plant},
      {"control", c.control},
      {"trajectory", {{"segment_duration_s", c.segment_duration}}},
      {"dataset",
       {{"size", c.dataset_size}, {"train_size", c.train_size}, {"vib_freq_hz", c.dataset_vib_freq}, {"seed", c.dataset_seed}}},
      {"freq_sweep", {{"freqs_hz", c.sweep_freqs}, {"length", c.sweep_length}, {"seed", c.sweep_seed}}},
      {"sinusoid",
       {{"amplitude_mm", c.sinusoid_amplitude},
        {"vib_freq_hz", c.sinusoid_vib_freq},
        {"cycles", c.sinusoid_cycles},
        {"cells", cells}}},
      {"tcn", c.tcn},
      {"tiers", tiers},
      {"training_seeds", c.training_seeds},
      {"compensation", {{"length", c.compensation_length}, {"seed", c.compensation_seed}}},
  };
  j["tcn"].erase("channels");
  j["tcn"].erase("seed");
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw InvalidConfig("configuration root must be an object");
  if (j.contains("plant")) j.at("plant").get_to(c.plant);
  if (j.contains("control")) j.at("control").get_to(c.control);
  if (j.contains("trajectory")) c.segment_duration = j.at("trajectory").value("segment_duration_s", c.segment_duration);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.dataset_size = d.value("size", c.dataset_size);
    c.train_size = d.value("train_size", c.train_size);
    c.dataset_vib_freq = d.value("vib_freq_hz", c.dataset_vib_freq);
    c.dataset_seed = d.value("seed", c.dataset_seed);
  }
  if (j.contains("freq_sweep")) {
    const auto& s = j.at("freq_sweep");
    c.sweep_freqs = s.value("freqs_hz", c.sweep_freqs);
    c.sweep_length = s.value("length", c.sweep_length);
    c.sweep_seed = s.value("seed", c.sweep_seed);
  }
  if (j.contains("sinusoid")) {
    const auto& s = j.at("sinusoid");
    c.sinusoid_amplitude = s.value("amplitude_mm", c.sinusoid_amplitude);
    c.sinusoid_vib_freq = s.value("vib_freq_hz", c.sinusoid_vib_freq);
    c.sinusoid_cycles = s.value("cycles", c.sinusoid_cycles);
    if (s.contains("cells")) {
      c.sinusoid_cells.clear();
      for (const auto& cell : s.at("cells")) {
        c.sinusoid_cells.push_back({cell.at("initial_tension_n").get<double>(), cell.at("period_s").get<double>()});
      }
    }
  }
  if (j.contains("tcn")) j.at("tcn").get_to(c.tcn);
  if (j.contains("tiers")) {
    c.tiers.clear();
    for (const auto& t : j.at("tiers")) {
      c.tiers.push_back({t.at("target").get<std::size_t>(), t.at("channels").get<std::vector<std::size_t>>()});
    }
  }
  c.training_seeds = j.value("training_seeds", c.training_seeds);
  if (j.contains("compensation")) {
    c.compensation_length = j.at("compensation").value("length", c.compensation_length);
    c.compensation_seed = j.at("compensation").value("seed", c.compensation_seed);
  }
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  // Caps the 24-run ablation at about 20 minutes on one core.
  c.tcn.epochs = 80;
  c.tcn.patience = 20;
  for (std::size_t target : reference::kTierTargets) {
    c.tiers.push_back({target, channels_for_target(target, c.tcn.seq_len, c.tcn.kernel_size, c.tcn.in_channels)});
  }
  return c;
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("TSM_DITHER_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& job) {
  const std::size_t workers = worker_count(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void to_json(nlohmann::json& j, const Assertion& a) {
  j = nlohmann::json{{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}};
}

bool ExperimentReport::all_passed() const {
  return std::all_of(assertions.begin(), assertions.end(), [](const Assertion& a) { return a.passed; });
}

void ExperimentReport::check(std::string name, bool passed, std::string detail) {
  assertions.push_back({std::move(name), passed, std::move(detail)});
}

nlohmann::json ExperimentReport::to_json() const {
  return nlohmann::json{{"experiment", experiment},   {"simulated", simulated},
                        {"reference", reference},     {"assertions", assertions},
                        {"all_passed", all_passed()}, {"manifest", manifest}};
}

namespace reference {
const std::vector<SweepRow> kFreqSweep = {
    {0, 2.2345, 1.2090, 0.0000},  {10, 1.9155, 1.1295, 0.8061}, {20, 1.9466, 1.1246, 0.7665},
    {30, 1.9469, 1.1227, 0.7828}, {40, 1.9083, 1.1050, 0.7277}, {50, 1.9120, 1.1023, 0.7548},
    {60, 1.9466, 1.1351, 0.6206}, {70, 1.7974, 1.0647, 1.0000}, {80, 1.7561, 1.0550, 0.9666},
    {90, 1.7113, 1.0309, 0.7603}, {100, 1.8366, 1.0958, 0.7099},
};
const std::vector<CompensationRow> kCompensation = {
    {"uncompensated/no-vib", 1.334, 0.964}, {"uncompensated/vib", 1.077, 0.692},
    {"354/no-vib", 0.4336, 0.300},          {"354/vib", 0.2757, 0.184},
    {"1282/no-vib", 0.3719, 0.253},         {"1282/vib", 0.1984, 0.162},
    {"4866/no-vib", 0.3913, 0.286},         {"4866/vib", 0.2200, 0.195},
    {"18946/no-vib", 0.3703, 0.257},        {"18946/vib", 0.1969, 0.157},
};
}  // namespace reference

namespace {

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

TimeSeries random_trajectory(const ExperimentConfig& config, std::size_t length, std::uint64_t seed) {
  const auto spec =
      random_spec_for_length(length, seed, config.segment_duration, static_cast<double>(config.control.rate_motion));
  return gen_random_trajectory(spec).slice(0, length);
}

nlohmann::json config_manifest(const ExperimentConfig& config) { return nlohmann::json(config); }

}  // namespace

WindowedDataset Dataset::train_windows(std::size_t seq_len) const {
  return make_windows(p_meas.values(), p_cmd.values(), seq_len, 0, n_train);
}

WindowedDataset Dataset::val_windows(std::size_t seq_len) const {
  return make_windows(p_meas.values(), p_cmd.values(), seq_len, n_train, p_cmd.size());
}

DatasetPair build_datasets(const ExperimentConfig& config) {
  config.validate();
  const TimeSeries traj = random_trajectory(config, config.dataset_size, config.dataset_seed);
  std::vector<std::optional<Episode>> episodes(2);
  const double freqs[2] = {0.0, config.dataset_vib_freq};
  parallel_for(2, [&](std::size_t i) { episodes[i] = run_episode(traj, config.plant, freqs[i], config.control); });
  return DatasetPair{
      Dataset{Condition::no_vib, 0.0, traj, episodes[0]->p_meas, config.train_size},
      Dataset{Condition::vib, config.dataset_vib_freq, traj, episodes[1]->p_meas, config.train_size},
  };
}

FreqSweepResult freq_sweep(const ExperimentConfig& config) {
  config.validate();
  const TimeSeries traj = random_trajectory(config, config.sweep_length, config.sweep_seed);
  const std::size_t n = config.sweep_freqs.size();
  std::vector<std::optional<TimeSeries>> outputs(n);
  parallel_for(n, [&](std::size_t i) {
    outputs[i] = run_episode(traj, config.plant, config.sweep_freqs[i], config.control).p_meas;
  });
  FreqSweepResult result{traj, {}, {}};
  std::vector<double> rs;
  for (std::size_t i = 0; i < n; ++i) {
    SweepRow row;
    row.freq = config.sweep_freqs[i];
    row.metrics = evaluate(traj, *outputs[i]);
    row.residual_std = residual_std(traj, *outputs[i]);
    rs.push_back(row.metrics.pearson);
    result.rows.push_back(row);
    result.outputs.push_back(std::move(*outputs[i]));
  }
  if (n >= 2 && *std::max_element(rs.begin(), rs.end()) > *std::min_element(rs.begin(), rs.end())) {
    const auto norm = normalize_correlations(rs);
    for (std::size_t i = 0; i < n; ++i) result.rows[i].metrics.normalized_correlation = norm[i];
  }
  return result;
}

ExperimentReport report(const FreqSweepResult& result, const ExperimentConfig& config) {
  ExperimentReport r;
  r.experiment = "freq-sweep";
  const SweepRow& base = result.rows.front();
  nlohmann::json rows = nlohmann::json::array();
  bool all_below = true;
  bool all_pearson = true;
  double best_rmse = base.metrics.rmse;
  double best_freq = base.freq;
  for (const auto& row : result.rows) {
    nlohmann::json m = row.metrics;
    m["freq_hz"] = row.freq;
    m["residual_std_mm"] = row.residual_std;
    m["rmse_reduction"] = 1.0 - row.metrics.rmse / base.metrics.rmse;
    rows.push_back(m);
    if (row.freq == 0.0) continue;
    all_below = all_below && row.metrics.rmse < base.metrics.rmse;
    all_pearson = all_pearson && row.metrics.pearson > base.metrics.pearson;
    if (row.metrics.rmse < best_rmse) {
      best_rmse = row.metrics.rmse;
      best_freq = row.freq;
    }
  }
  const double improvement = 1.0 - best_rmse / base.metrics.rmse;
  std::size_t min_index = 0;
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    if (result.rows[i].metrics.pearson < result.rows[min_index].metrics.pearson) min_index = i;
  }
  r.simulated = {{"rows", rows},
                 {"best_freq_hz", best_freq},
                 {"best_rmse_reduction", improvement},
                 {"zero_hz_is_correlation_minimum", min_index == 0}};
  nlohmann::json ref = nlohmann::json::array();
  for (const auto& row : reference::kFreqSweep) {
    ref.push_back({{"freq_hz", row.freq}, {"rmse_mm", row.rmse}, {"std_mm", row.std}, {"norm_corr", row.norm_corr}});
  }
  r.reference = {{"rows", ref},
                 {"baseline_rmse_mm", reference::kSweepBaselineRmse},
                 {"best_rmse_mm", reference::kSweepBestRmse},
                 {"best_rmse_reduction", reference::kSweepBestImprovement}};
  r.check("rmse_below_baseline_at_every_frequency", all_below, "baseline " + fmt(base.metrics.rmse) + " mm");
  r.check("best_rmse_reduction_at_least_10pct", improvement >= 0.10,
          fmt(100.0 * improvement, 2) + "% at " + fmt(best_freq, 0) + " Hz");
  r.check("pearson_above_baseline_at_every_frequency", all_pearson, "baseline r = " + fmt(base.metrics.pearson, 5));
  r.manifest = {{"seed", config.sweep_seed}, {"length", config.sweep_length}, {"config", config_manifest(config)}};
  return r;
}

SinusoidStudyResult sinusoid_study(const ExperimentConfig& config) {
  config.validate();
  const std::size_t n = config.sinusoid_cells.size() * 2;
  std::vector<std::optional<SinusoidRun>> runs(n);
  parallel_for(n, [&](std::size_t i) {
    const SinusoidCell cell = config.sinusoid_cells[i / 2];
    const double f = i % 2 == 0 ? 0.0 : config.sinusoid_vib_freq;
    PlantParams plant = config.plant;
    plant.initial_tension = cell.initial_tension;
    TrajectorySpec spec;
    spec.kind = TrajectoryKind::sinusoid;
    spec.amplitude = config.sinusoid_amplitude;
    spec.period = cell.period;
    spec.duration = cell.period * static_cast<double>(config.sinusoid_cycles);
    spec.sample_rate = config.control.rate_motion;
    TimeSeries traj = gen_sinusoid(spec);
    Episode ep = run_episode(traj, plant, f, config.control);
    const auto per = static_cast<std::size_t>(std::llround(cell.period * spec.sample_rate));
    const std::size_t first = traj.size() - 1 - per;
    auto last = [&](const TimeSeries& s) { return s.values().subspan(first, per); };
    SinusoidRun run{cell, f, phase_gain(traj, ep.p_meas, cell.period), loop_area(last(traj), last(ep.p_meas)),
                    loop_area(last(ep.T_in), last(ep.T_out)), std::move(traj), std::move(ep)};
    runs[i] = std::move(run);
  });
  SinusoidStudyResult result;
  for (auto& r : runs) result.runs.push_back(std::move(*r));
  return result;
}

ExperimentReport report(const SinusoidStudyResult& result, const ExperimentConfig& config) {
  ExperimentReport r;
  r.experiment = "sinusoid-study";
  nlohmann::json cells = nlohmann::json::array();
  bool gain_up = true;
  std::string gain_detail;
  for (std::size_t i = 0; i + 1 < result.runs.size(); i += 2) {
    const auto& off = result.runs[i];
    const auto& on = result.runs[i + 1];
    gain_up = gain_up && on.phase.gain > off.phase.gain;
    gain_detail += fmt(off.phase.gain) + "->" + fmt(on.phase.gain) + " ";
  }
  for (const auto& run : result.runs) {
    cells.push_back({{"initial_tension_n", run.cell.initial_tension},
                     {"period_s", run.cell.period},
                     {"vib_freq_hz", run.vib_freq},
                     {"gain", run.phase.gain},
                     {"lag_s", run.phase.lag},
                     {"position_loop_area_mm2", run.position_loop_area},
                     {"tension_loop_area_n2", run.tension_loop_area}});
  }
  auto find = [&](double tension, double period, double f) -> const SinusoidRun* {
    for (const auto& run : result.runs) {
      if (run.cell.initial_tension == tension && run.cell.period == period && run.vib_freq == f) return &run;
    }
    return nullptr;
  };
  r.simulated = {{"cells", cells}};
  r.reference = {{"gain_improvement_max", reference::kGainImprovementMax},
                 {"gain_improvement_position", reference::kGainImprovementPosition}};
  r.check("vibration_raises_gain_in_every_cell", gain_up, gain_detail);

  // Trend checks need the four standard cells; other grids only get the gain check.
  for (double f : {0.0, config.sinusoid_vib_freq}) {
    const std::string tag = f == 0.0 ? "vibration_off" : "vibration_on";
    const SinusoidRun* short_period = find(8.5, 5.0, f);
    const SinusoidRun* long_period = find(8.5, 20.0, f);
    if (short_period && long_period) {
      r.check("tension_loop_narrower_at_20T_" + tag, long_period->tension_loop_area < short_period->tension_loop_area,
              "20T " + fmt(long_period->tension_loop_area, 2) + " vs 5T " + fmt(short_period->tension_loop_area, 2));
    }
    const SinusoidRun* low = find(9.0, 10.0, f);
    const SinusoidRun* high = find(13.0, 10.0, f);
    if (low && high) {
      const double rel = std::abs(high->position_loop_area - low->position_loop_area) / std::abs(low->position_loop_area);
      r.check("tension_changes_position_loop_below_20pct_" + tag, rel < 0.20, fmt(100.0 * rel, 2) + "%");
    }
  }
  r.manifest = {{"config", config_manifest(config)}};
  return r;
}

TrainingRun train_tier(const ExperimentConfig& config, const DatasetPair& data, const SizeTier& tier,
                       Condition condition, std::uint64_t seed, const std::function<void(const EpochRecord&)>& on_epoch) {
  const TcnConfig tc = config.tcn_for(tier, seed);
  const Dataset& d = data.get(condition);
  const auto train_set = d.train_windows(tc.seq_len);
  const auto val_set = d.val_windows(tc.seq_len);
  try {
    TrainResult res = train(tc, train_set, val_set, on_epoch);
    return TrainingRun{tier.target, condition, seed, exact_param_count(tc), param_count_formula(tc), std::move(res)};
  } catch (const TrainingDiverged& e) {
    throw TrainingDiverged("tier " + std::to_string(tier.target) + " " + std::string(to_string(condition)) + " seed " +
                           std::to_string(seed) + ": " + e.what());
  }
}

const AblationCell& AblationResult::cell(std::size_t tier, Condition c) const {
  for (const auto& cell : cells) {
    if (cell.tier == tier && cell.condition == c) return cell;
  }
  throw InvalidConfig("no ablation cell for tier " + std::to_string(tier));
}

const TrainingRun& AblationResult::run(std::size_t tier, Condition c, std::uint64_t seed) const {
  for (const auto& run : runs) {
    if (run.tier == tier && run.condition == c && run.seed == seed) return run;
  }
  throw InvalidConfig("no training run for tier " + std::to_string(tier));
}

AblationResult ablate(const ExperimentConfig& config, const DatasetPair& data) {
  config.validate();
  if (config.tiers.empty()) throw InvalidConfig("no size tiers configured");
  const std::size_t ns = config.training_seeds.size();
  const std::size_t n = config.tiers.size() * 2 * ns;
  std::vector<std::optional<TrainingRun>> runs(n);
  parallel_for(n, [&](std::size_t i) {
    const SizeTier& tier = config.tiers[i / (2 * ns)];
    const Condition c = (i / ns) % 2 == 0 ? Condition::no_vib : Condition::vib;
    runs[i] = train_tier(config, data, tier, c, config.training_seeds[i % ns]);
  });
  AblationResult result;
  for (auto& r : runs) result.runs.push_back(std::move(*r));
  for (std::size_t c0 = 0; c0 < n; c0 += ns) {
    double mean = 0.0;
    for (std::size_t s = 0; s < ns; ++s) mean += result.runs[c0 + s].result.best_val_mse;
    mean /= static_cast<double>(ns);
    double var = 0.0;
    for (std::size_t s = 0; s < ns; ++s) {
      const double d = result.runs[c0 + s].result.best_val_mse - mean;
      var += d * d;
    }
    result.cells.push_back(
        {result.runs[c0].tier, result.runs[c0].condition, mean, std::sqrt(var / static_cast<double>(ns))});
  }
  return result;
}

ExperimentReport report(const AblationResult& result, const ExperimentConfig& config) {
  ExperimentReport r;
  r.experiment = "ablate";
  nlohmann::json grid = nlohmann::json::array();
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : result.runs) {
    runs.push_back({{"tier", run.tier},
                    {"condition", to_string(run.condition)},
                    {"seed", run.seed},
                    {"exact_params", run.exact_params},
                    {"formula_params", run.formula_params},
                    {"best_epoch", run.result.best_epoch},
                    {"epochs_run", run.result.curve.size()},
                    {"best_val_mse_mm2", run.result.best_val_mse}});
  }
  std::size_t std_majority = 0;
  bool vib_better = true;
  std::string vib_detail;
  bool counts_ok = true;
  std::string count_detail;
  for (const auto& tier : config.tiers) {
    const auto& nv = result.cell(tier.target, Condition::no_vib);
    const auto& v = result.cell(tier.target, Condition::vib);
    const std::size_t exact = exact_param_count(config.tcn_for(tier, 0));
    grid.push_back({{"tier", tier.target},
                    {"exact_params", exact},
                    {"channels", tier.channels},
                    {"no_vib", {{"mean_val_mse_mm2", nv.mean_val_mse}, {"std_val_mse_mm2", nv.std_val_mse}}},
                    {"vib", {{"mean_val_mse_mm2", v.mean_val_mse}, {"std_val_mse_mm2", v.std_val_mse}}},
                    {"relative_reduction", 1.0 - v.mean_val_mse / nv.mean_val_mse}});
    vib_better = vib_better && v.mean_val_mse < nv.mean_val_mse;
    vib_detail += std::to_string(tier.target) + ": " + fmt(v.mean_val_mse, 5) + " vs " + fmt(nv.mean_val_mse, 5) + "; ";
    if (nv.std_val_mse >= v.std_val_mse) ++std_majority;
    const double rel = std::abs(static_cast<double>(exact) - static_cast<double>(tier.target)) /
                       static_cast<double>(tier.target);
    counts_ok = counts_ok && rel <= 0.10;
    count_detail += std::to_string(tier.target) + "->" + std::to_string(exact) + " ";
  }
  const auto& smallest = *std::min_element(config.tiers.begin(), config.tiers.end(),
                                           [](const SizeTier& a, const SizeTier& b) { return a.target < b.target; });
  const auto& largest = *std::max_element(config.tiers.begin(), config.tiers.end(),
                                          [](const SizeTier& a, const SizeTier& b) { return a.target < b.target; });
  const double small_vib = result.cell(smallest.target, Condition::vib).mean_val_mse;
  const double large_nv = result.cell(largest.target, Condition::no_vib).mean_val_mse;

  r.simulated = {{"grid", grid},
                 {"runs", runs},
                 {"tiers_with_no_vib_std_at_least_vib_std", std_majority}};
  r.reference = {{"tier_targets", reference::kTierTargets},
                 {"no_vib_mse", {{"mean", reference::kMseNoVibMean}, {"std", reference::kMseNoVibStd}}},
                 {"vib_mse", {{"mean", reference::kMseVibMean}, {"std", reference::kMseVibStd}}}};
  r.check("exact_counts_within_10pct_of_targets", counts_ok, count_detail);
  r.check("vib_below_no_vib_at_every_tier", vib_better, vib_detail);
  r.check("smallest_vib_not_above_largest_no_vib", small_vib <= large_nv,
          fmt(small_vib, 5) + " vs " + fmt(large_nv, 5));
  r.manifest = {{"training_seeds", config.training_seeds},
                {"dataset_seed", config.dataset_seed},
                {"config", config_manifest(config)}};
  return r;
}

TimeSeries compensation_trajectory(const ExperimentConfig& config) {
  return random_trajectory(config, config.compensation_length, config.compensation_seed);
}

CompensationRun compensate(const ExperimentConfig& config, const TcnModel& model, Condition trained_on,
                           Condition condition, std::size_t tier) {
  if (trained_on != condition) {
    throw ConfigurationError("model trained on " + std::string(to_string(trained_on)) + " data cannot be deployed under " +
                             std::string(to_string(condition)));
  }
  const std::size_t L = model.config().seq_len;
  const TimeSeries desired = compensation_trajectory(config);
  if (desired.size() <= L) throw InsufficientData("deployment trajectory shorter than the model window");
  const auto windows = make_windows(desired.values(), desired.values(), L, 0, desired.size());
  TimeSeries command(desired.t0(), desired.dt(), Unit::millimeter, model.predict(windows));
  const double f = condition == Condition::vib ? config.dataset_vib_freq : 0.0;
  TimeSeries raw = run_episode(desired, config.plant, f, config.control).p_meas;
  TimeSeries comp = run_episode(command, config.plant, f, config.control).p_meas;
  const std::size_t warm = L - 1;
  const std::size_t count = desired.size() - warm;
  const auto uncompensated = mae_std(desired.slice(warm, count), raw.slice(warm, count));
  const auto compensated = mae_std(desired.slice(warm, count), comp.slice(warm, count));
  return CompensationRun{tier,    condition, uncompensated, compensated, desired, std::move(command), std::move(raw),
                         std::move(comp)};
}

const CompensationRun& CompensationResult::run(std::size_t tier, Condition c) const {
  for (const auto& r : runs) {
    if (r.tier == tier && r.condition == c) return r;
  }
  throw InvalidConfig("no compensation run for tier " + std::to_string(tier));
}

CompensationResult compensate_all(const ExperimentConfig& config, const AblationResult& ablation) {
  const std::size_t n = config.tiers.size() * 2;
  std::vector<std::optional<CompensationRun>> runs(n);
  parallel_for(n, [&](std::size_t i) {
    const std::size_t tier = config.tiers[i / 2].target;
    const Condition c = i % 2 == 0 ? Condition::no_vib : Condition::vib;
    const auto& trained = ablation.run(tier, c, config.training_seeds.front());
    runs[i] = compensate(config, trained.result.model, c, c, tier);
  });
  CompensationResult result;
  for (auto& r : runs) result.runs.push_back(std::move(*r));
  return result;
}

ExperimentReport report(const CompensationResult& result, const ExperimentConfig& config) {
  ExperimentReport r;
  r.experiment = "compensate";
  nlohmann::json rows = nlohmann::json::array();
  bool halved = true;
  std::string halved_detail;
  bool vib_better = true;
  std::string vib_detail;
  std::vector<std::size_t> tiers;
  for (const auto& run : result.runs) {
    rows.push_back({{"tier", run.tier},
                    {"condition", to_string(run.condition)},
                    {"uncompensated", {{"mae_mm", run.uncompensated.mae}, {"std_mm", run.uncompensated.std}}},
                    {"compensated", {{"mae_mm", run.compensated.mae}, {"std_mm", run.compensated.std}}},
                    {"mae_reduction", 1.0 - run.compensated.mae / run.uncompensated.mae}});
    halved = halved && run.compensated.mae < 0.5 * run.uncompensated.mae;
    halved_detail += std::to_string(run.tier) + "/" + std::string(to_string(run.condition)) + ": " +
                     fmt(run.compensated.mae) + " vs " + fmt(run.uncompensated.mae) + "; ";
    if (std::find(tiers.begin(), tiers.end(), run.tier) == tiers.end()) tiers.push_back(run.tier);
  }
  for (std::size_t t : tiers) {
    const double v = result.run(t, Condition::vib).compensated.mae;
    const double nv = result.run(t, Condition::no_vib).compensated.mae;
    vib_better = vib_better && v < nv;
    vib_detail += std::to_string(t) + ": " + fmt(v) + " vs " + fmt(nv) + "; ";
  }
  nlohmann::json ref = nlohmann::json::array();
  for (const auto& row : reference::kCompensation) {
    ref.push_back({{"label", row.label}, {"mae_mm", row.mae}, {"std_mm", row.std}});
  }
  r.simulated = {{"rows", rows}, {"warmup_samples_excluded", config.tcn.seq_len - 1}};
  r.reference = {{"rows", ref}};
  r.check("compensated_mae_below_half_of_uncompensated", halved, halved_detail);
  r.check("vib_compensated_below_no_vib_compensated_at_every_tier", vib_better, vib_detail);
  r.manifest = {{"compensation_seed", config.compensation_seed},
                {"length", config.compensation_length},
                {"training_seed", config.training_seeds.front()},
                {"config", config_manifest(config)}};
  return r;
}

double breakaway_displacement(const PlantParams& params, double vib_freq, double ramp_velocity, double threshold,
                              double settle) {
  params.validate();
  if (!(ramp_velocity > 0.0)) throw InvalidConfig("ramp_velocity must be positive");
  const double omega = vibration_command(vib_freq);
  PlantState s = equilibrium_state(params);
  // The 0.1 s window spans whole cycles at every 10 Hz multiple, so the mean
  // filters out the vibration-driven oscillation of x_out.
  const auto window = static_cast<std::size_t>(std::llround(0.1 / params.dt_sim));
  const auto settle_steps = std::max(window, static_cast<std::size_t>(std::llround(settle / params.dt_sim)));
  std::vector<double> ring(window, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < settle_steps; ++i) {
    s = step(s, params, 0.0, omega);
    if (i + window >= settle_steps) {
      ring[(i + window - settle_steps)] = s.x_out;
      sum += s.x_out;
    }
  }
  const double baseline = sum / static_cast<double>(window);
  const double x0 = s.x_in;
  const double max_travel = 20.0 * (params.lugre.stiction / params.k_t + 1.0);
  const auto max_steps = static_cast<std::size_t>(max_travel / (ramp_velocity * params.dt_sim));
  for (std::size_t i = 0; i < max_steps; ++i) {
    s = step(s, params, ramp_velocity, omega);
    sum += s.x_out - ring[i % window];
    ring[i % window] = s.x_out;
    if (sum / static_cast<double>(window) - baseline >= threshold) return s.x_in - x0;
  }
  throw InsufficientData("output never broke away within the ramp");
}

}  // namespace tsm
