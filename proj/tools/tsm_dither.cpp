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

// tsm-dither: command-line driver for the tendon-sheath simulator, the
// inverse-model trainer and the four studies built on them.
//
// Exit codes: 0 all checks passed, 1 a reported check failed, 2 usage or
// configuration error, 3 simulation or training diverged.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsm/error.hpp"
#include "tsm/experiments.hpp"
#include "tsm/io.hpp"

namespace fs = std::filesystem;
using namespace tsm;

namespace {

constexpr int kExitFailedCheck = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

struct CommonOptions {
  std::vector<std::string> arguments;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

struct Loaded {
  ExperimentConfig config;
  std::string hash;
};

Loaded load_config(const CommonOptions& opt) {
  Loaded l{default_experiment_config(), io::hex64(io::fnv1a(""))};
  if (opt.config_path.empty()) return l;
  if (!fs::exists(opt.config_path)) throw ConfigurationError("config file not found: " + opt.config_path);
  const std::string text = io::read_file(opt.config_path);
  l.hash = io::hex64(io::fnv1a(text));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigurationError(opt.config_path + ": " + e.what());
  }
  try {
    from_json(j, l.config);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(opt.config_path + ": " + e.what());
  }
  l.config.validate();
  return l;
}

class Run {
 public:
  Run(std::string command, const CommonOptions& opt, Loaded loaded)
      : command_(std::move(command)), opt_(opt), loaded_(std::move(loaded)), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(opt_.out_dir);
  }

  const ExperimentConfig& config() const { return loaded_.config; }
  ExperimentConfig& config() { return loaded_.config; }
  fs::path path(const std::string& name) const { return fs::path(opt_.out_dir) / name; }
  void write(const std::string& name, const std::string& content) const { io::write_atomic(path(name), content); }
  void write_json(const std::string& name, const nlohmann::json& j) const { write(name, j.dump(2) + "\n"); }

  /// Writes report.json and manifest.json and turns the report into an exit code.
  int finish(const ExperimentReport* report, nlohmann::json seeds, nlohmann::json extra = nlohmann::json::object()) {
    if (report) {
      write_json("report.json", report->to_json());
      for (const auto& a : report->assertions) {
        std::printf("%s %s (%s)\n", a.passed ? "PASS" : "FAIL", a.name.c_str(), a.detail.c_str());
      }
    }
    io::RunManifest m;
    m.command = command_;
    m.arguments = opt_.arguments;
    m.config_path = opt_.config_path;
    m.config_hash = loaded_.hash;
    m.seeds = std::move(seeds);
    m.out_dir = opt_.out_dir;
    m.version = TSM_VERSION;
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    m.extra = std::move(extra);
    m.extra["config"] = loaded_.config;
    write_json("manifest.json", m);
    return report && !report->all_passed() ? kExitFailedCheck : 0;
  }

 private:
  std::string command_;
  CommonOptions opt_;
  Loaded loaded_;
  std::chrono::steady_clock::time_point start_;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000"};

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

std::vector<double> times_of(const TimeSeries& s) {
  std::vector<double> t(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = s.time_at(i);
  return t;
}

std::string freq_tag(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03.0fhz", f);
  return buf;
}

int cmd_simulate(const CommonOptions& opt, double freq, const std::string& kind, std::size_t length) {
  Run run("simulate", opt, load_config(opt));
  const auto& cfg = run.config();
  const std::uint64_t seed = opt.seed.value_or(cfg.sweep_seed);
  std::optional<TimeSeries> traj;
  if (kind == "sinusoid") {
    TrajectorySpec spec;
    spec.kind = TrajectoryKind::sinusoid;
    spec.amplitude = cfg.sinusoid_amplitude;
    spec.period = 10.0;
    spec.duration = 30.0;
    spec.sample_rate = cfg.control.rate_motion;
    traj = gen_sinusoid(spec);
  } else {
    const auto spec = random_spec_for_length(length, seed, cfg.segment_duration, cfg.control.rate_motion);
    traj = gen_random_trajectory(spec).slice(0, length);
  }
  const Episode ep = run_episode(*traj, cfg.plant, freq, cfg.control);
  run.write("log.csv", io::log_csv(ep.log));
  nlohmann::json metrics = evaluate(*traj, ep.p_meas);
  metrics["freq_hz"] = freq;
  metrics["residual_std_mm"] = residual_std(*traj, ep.p_meas);
  run.write_json("metrics.json", metrics);
  run.write("overlay.svg", io::svg_plot({{"command", times_of(*traj), to_vec(traj->values()), kPalette[0]},
                                         {"measured", times_of(ep.p_meas), to_vec(ep.p_meas.values()), kPalette[1]}},
                                        {"Position tracking", "time [s]", "position [mm]"}));
  return run.finish(nullptr, {{"trajectory", seed}}, {{"freq_hz", freq}, {"trajectory", kind}});
}

int cmd_freq_sweep(const CommonOptions& opt) {
  Run run("freq-sweep", opt, load_config(opt));
  if (opt.seed) run.config().sweep_seed = *opt.seed;
  const auto& cfg = run.config();
  const auto result = freq_sweep(cfg);
  const auto rep = report(result, cfg);

  std::vector<double> f, rmse, mae, sd, rsd, r, rn;
  for (const auto& row : result.rows) {
    f.push_back(row.freq);
    rmse.push_back(row.metrics.rmse);
    mae.push_back(row.metrics.mae);
    sd.push_back(row.metrics.std);
    rsd.push_back(row.residual_std);
    r.push_back(row.metrics.pearson);
    rn.push_back(row.metrics.normalized_correlation.value_or(std::nan("")));
  }
  run.write("sweep.csv", io::csv({"freq_hz", "rmse_mm", "mae_mm", "std_mm", "residual_std_mm", "pearson", "norm_corr"},
                                 {f, rmse, mae, sd, rsd, r, rn}));
  run.write("trajectory.csv", io::trajectory_csv(result.trajectory));
  std::vector<io::PlotSeries> overlay{{"command", times_of(result.trajectory), to_vec(result.trajectory.values()),
                                       kPalette[10]}};
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto t = times_of(result.outputs[i]);
    run.write("output_" + freq_tag(result.rows[i].freq) + ".csv",
              io::csv({"t_s", "p_cmd_mm", "p_meas_mm"}, {t, result.trajectory.values(), result.outputs[i].values()}));
    if (i == 0 || i + 1 == result.rows.size()) {
      overlay.push_back({freq_tag(result.rows[i].freq), t, to_vec(result.outputs[i].values()), kPalette[i == 0 ? 1 : 0]});
    }
  }
  std::vector<double> ref_rel, sim_rel;
  for (std::size_t i = 0; i < result.rows.size(); ++i) sim_rel.push_back(rmse[i] / rmse[0]);
  std::vector<double> ref_f;
  for (const auto& row : reference::kFreqSweep) {
    ref_f.push_back(row.freq);
    ref_rel.push_back(row.rmse / reference::kSweepBaselineRmse);
  }
  run.write("rmse_vs_freq.svg",
            io::svg_plot({{"simulated", f, sim_rel, kPalette[0]}, {"hardware reference", ref_f, ref_rel, kPalette[1]}},
                         {"RMSE relative to 0 Hz", "vibration frequency [Hz]", "RMSE / RMSE(0 Hz)", false, true}));
  run.write("overlay.svg", io::svg_plot(overlay, {"Tracking at the sweep ends", "time [s]", "position [mm]"}));
  return run.finish(&rep, {{"trajectory", cfg.sweep_seed}});
}

int cmd_sinusoid(const CommonOptions& opt) {
  Run run("sinusoid-study", opt, load_config(opt));
  const auto& cfg = run.config();
  const auto result = sinusoid_study(cfg);
  const auto rep = report(result, cfg);
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const auto& r = result.runs[i];
    char name[64];
    std::snprintf(name, sizeof name, "cell_F%.1f_T%.0f_%s", r.cell.initial_tension, r.cell.period,
                  freq_tag(r.vib_freq).c_str());
    run.write(std::string(name) + ".csv", io::episode_csv(r.reference, r.episode));
    if (i % 2 == 1) {
      const auto& off = result.runs[i - 1];
      auto last_cycle = [&](const TimeSeries& s, double period) {
        const auto per = static_cast<std::size_t>(std::llround(period * cfg.control.rate_motion));
        const auto v = s.values();
        return std::vector<double>(v.end() - static_cast<std::ptrdiff_t>(per) - 1, v.end());
      };
      const double T = r.cell.period;
      std::snprintf(name, sizeof name, "loops_F%.1f_T%.0f", r.cell.initial_tension, T);
      run.write(std::string(name) + "_position.svg",
                io::svg_plot({{"0 Hz", last_cycle(off.reference, T), last_cycle(off.episode.p_meas, T), kPalette[1]},
                              {freq_tag(r.vib_freq), last_cycle(r.reference, T), last_cycle(r.episode.p_meas, T),
                               kPalette[0]}},
                             {"Position hysteresis", "commanded [mm]", "measured [mm]"}));
      run.write(std::string(name) + "_tension.svg",
                io::svg_plot({{"0 Hz", last_cycle(off.episode.T_in, T), last_cycle(off.episode.T_out, T), kPalette[1]},
                              {freq_tag(r.vib_freq), last_cycle(r.episode.T_in, T), last_cycle(r.episode.T_out, T),
                               kPalette[0]}},
                             {"Tension hysteresis", "input tension [N]", "output tension [N]"}));
    }
  }
  return run.finish(&rep, nlohmann::json::object());
}

int cmd_gen_data(const CommonOptions& opt) {
  Run run("gen-data", opt, load_config(opt));
  if (opt.seed) run.config().dataset_seed = *opt.seed;
  const auto& cfg = run.config();
  const auto data = build_datasets(cfg);
  for (const Dataset* d : {&data.no_vib, &data.vib}) {
    const auto t = times_of(d->p_cmd);
    run.write("dataset_" + std::string(d->condition == Condition::vib ? "vib" : "no_vib") + ".csv",
              io::csv({"t_s", "p_cmd_mm", "p_meas_mm"}, {t, d->p_cmd.values(), d->p_meas.values()}));
  }
  nlohmann::json summary;
  for (const Dataset* d : {&data.no_vib, &data.vib}) {
    summary[std::string(to_string(d->condition))] = {{"vib_freq_hz", d->vib_freq},
                                                      {"metrics", evaluate(d->p_cmd, d->p_meas)},
                                                      {"n_train", d->n_train},
                                                      {"n_val", d->p_cmd.size() - d->n_train}};
  }
  run.write_json("datasets.json", summary);
  return run.finish(nullptr, {{"dataset", cfg.dataset_seed}});
}

int cmd_train(const CommonOptions& opt, const std::string& condition_text, std::size_t size) {
  Run run("train", opt, load_config(opt));
  const auto& cfg = run.config();
  const Condition c = parse_condition(condition_text);
  const SizeTier& tier = cfg.tier(size);
  const std::uint64_t seed = opt.seed.value_or(cfg.training_seeds.front());
  const auto data = build_datasets(cfg);
  const auto tr = train_tier(cfg, data, tier, c, seed, [](const EpochRecord& r) {
    if (r.epoch % 10 == 0) std::fprintf(stderr, "epoch %zu train %.6f val %.6f\n", r.epoch, r.train_mse, r.val_mse);
  });
  run.write("curve.csv", io::curve_csv(tr.result.curve));
  const nlohmann::json meta = {{"condition", to_string(c)},
                               {"vib_freq_hz", c == Condition::vib ? cfg.dataset_vib_freq : 0.0},
                               {"tier", tier.target},
                               {"dataset_seed", cfg.dataset_seed},
                               {"best_epoch", tr.result.best_epoch},
                               {"best_val_mse_mm2", tr.result.best_val_mse}};
  run.write_json("checkpoint.json", checkpoint_json(tr.result.model, meta));
  std::printf("tier %zu (%zu parameters) %s: best val MSE %.6f mm^2 at epoch %zu\n", tier.target, tr.exact_params,
              std::string(to_string(c)).c_str(), tr.result.best_val_mse, tr.result.best_epoch);
  return run.finish(nullptr, {{"training", seed}, {"dataset", cfg.dataset_seed}},
                    {{"condition", to_string(c)}, {"tier", tier.target}, {"exact_params", tr.exact_params}});
}

std::string run_name(const TrainingRun& r) {
  return std::to_string(r.tier) + "_" + std::string(r.condition == Condition::vib ? "vib" : "no_vib") + "_s" +
         std::to_string(r.seed);
}

int cmd_ablate(const CommonOptions& opt) {
  Run run("ablate", opt, load_config(opt));
  if (opt.seed) run.config().dataset_seed = *opt.seed;
  const auto& cfg = run.config();
  const auto data = build_datasets(cfg);
  const auto result = ablate(cfg, data);
  const auto rep = report(result, cfg);

  std::vector<double> tiers, exact, nv_mean, nv_std, v_mean, v_std;
  for (const auto& t : cfg.tiers) {
    tiers.push_back(static_cast<double>(t.target));
    exact.push_back(static_cast<double>(exact_param_count(cfg.tcn_for(t, 0))));
    nv_mean.push_back(result.cell(t.target, Condition::no_vib).mean_val_mse);
    nv_std.push_back(result.cell(t.target, Condition::no_vib).std_val_mse);
    v_mean.push_back(result.cell(t.target, Condition::vib).mean_val_mse);
    v_std.push_back(result.cell(t.target, Condition::vib).std_val_mse);
  }
  run.write("grid.csv", io::csv({"tier", "exact_params", "no_vib_mean_mse", "no_vib_std_mse", "vib_mean_mse",
                                 "vib_std_mse"},
                                {tiers, exact, nv_mean, nv_std, v_mean, v_std}));
  for (const auto& r : result.runs) {
    run.write("curves/" + run_name(r) + ".csv", io::curve_csv(r.result.curve));
    const nlohmann::json meta = {{"condition", to_string(r.condition)},
                                 {"vib_freq_hz", r.condition == Condition::vib ? cfg.dataset_vib_freq : 0.0},
                                 {"tier", r.tier},
                                 {"dataset_seed", cfg.dataset_seed},
                                 {"best_epoch", r.result.best_epoch},
                                 {"best_val_mse_mm2", r.result.best_val_mse}};
    run.write_json("checkpoints/" + run_name(r) + ".json", checkpoint_json(r.result.model, meta));
  }
  std::vector<double> ref_x(std::begin(reference::kTierTargets), std::end(reference::kTierTargets));
  run.write("mse_vs_params.svg",
            io::svg_plot({{"no-vib (simulated)", exact, nv_mean, kPalette[1]},
                          {"vib (simulated)", exact, v_mean, kPalette[0]},
                          {"no-vib reference", ref_x, std::vector<double>(4, reference::kMseNoVibMean), kPalette[3]},
                          {"vib reference", ref_x, std::vector<double>(4, reference::kMseVibMean), kPalette[2]}},
                         {"Validation MSE by model size", "trainable parameters", "MSE [mm^2]", true, true}));
  return run.finish(&rep, {{"dataset", cfg.dataset_seed}, {"training", cfg.training_seeds}});
}

void write_compensation(const Run& run, const CompensationRun& c, const std::string& stem) {
  const auto t = times_of(c.desired);
  run.write(stem + ".csv", io::csv({"t_s", "p_des_mm", "p_cmd_mm", "p_meas_uncomp_mm", "p_meas_comp_mm"},
                                   {t, c.desired.values(), c.command.values(), c.measured_uncompensated.values(),
                                    c.measured_compensated.values()}));
  run.write(stem + ".svg",
            io::svg_plot({{"desired", t, to_vec(c.desired.values()), kPalette[10]},
                          {"uncompensated", t, to_vec(c.measured_uncompensated.values()), kPalette[1]},
                          {"compensated", t, to_vec(c.measured_compensated.values()), kPalette[0]}},
                         {"Compensation on the unseen trajectory", "time [s]", "position [mm]"}));
}

int cmd_compensate(const CommonOptions& opt, const std::string& checkpoint, const std::string& ablation_dir,
                   const std::string& condition_text) {
  Run run("compensate", opt, load_config(opt));
  if (opt.seed) run.config().compensation_seed = *opt.seed;
  const auto& cfg = run.config();
  cfg.validate();
  CompensationResult result;
  auto load = [](const fs::path& p) {
    const auto j = nlohmann::json::parse(io::read_file(p));
    return std::pair{model_from_checkpoint(j), j.at("metadata")};
  };
  if (!checkpoint.empty()) {
    auto [model, meta] = load(checkpoint);
    const Condition trained = parse_condition(meta.at("condition").get<std::string>());
    const Condition deploy = condition_text.empty() ? trained : parse_condition(condition_text);
    result.runs.push_back(compensate(cfg, model, trained, deploy, meta.value("tier", std::size_t{0})));
  } else if (!ablation_dir.empty()) {
    for (const auto& tier : cfg.tiers) {
      for (Condition c : {Condition::no_vib, Condition::vib}) {
        const fs::path p = fs::path(ablation_dir) / "checkpoints" /
                           (std::to_string(tier.target) + "_" + (c == Condition::vib ? "vib" : "no_vib") + "_s" +
                            std::to_string(cfg.training_seeds.front()) + ".json");
        if (!fs::exists(p)) throw ConfigurationError("missing checkpoint " + p.string());
        auto [model, meta] = load(p);
        result.runs.push_back(compensate(cfg, model, parse_condition(meta.at("condition").get<std::string>()), c,
                                         tier.target));
      }
    }
  } else {
    throw ConfigurationError("compensate needs --checkpoint FILE or --ablation DIR");
  }
  for (const auto& c : result.runs) {
    write_compensation(run, c,
                       "compensation_" + std::to_string(c.tier) + "_" + (c.condition == Condition::vib ? "vib" : "no_vib"));
  }
  nlohmann::json seeds = {{"compensation", cfg.compensation_seed}};
  if (result.runs.size() == 1) {
    // A single deployment cannot support the cross-condition comparison.
    ExperimentReport rep;
    rep.experiment = "compensate";
    const auto& c = result.runs.front();
    rep.simulated = {{"tier", c.tier},
                     {"condition", to_string(c.condition)},
                     {"uncompensated", {{"mae_mm", c.uncompensated.mae}, {"std_mm", c.uncompensated.std}}},
                     {"compensated", {{"mae_mm", c.compensated.mae}, {"std_mm", c.compensated.std}}}};
    rep.check("compensated_mae_below_half_of_uncompensated", c.compensated.mae < 0.5 * c.uncompensated.mae,
              std::to_string(c.compensated.mae) + " vs " + std::to_string(c.uncompensated.mae));
    return run.finish(&rep, seeds);
  }
  const auto rep = report(result, cfg);
  return run.finish(&rep, seeds);
}

int cmd_report(const CommonOptions& opt, const std::vector<std::string>& inputs) {
  Run run("report", opt, load_config(opt));
  nlohmann::json summary = nlohmann::json::object();
  bool all = true;
  for (const auto& dir : inputs) {
    const fs::path p = fs::path(dir) / "report.json";
    if (!fs::exists(p)) throw ConfigurationError("no report.json in " + dir);
    const auto j = nlohmann::json::parse(io::read_file(p));
    const std::string name = j.at("experiment").get<std::string>();
    summary[name] = {{"source", dir},
                     {"simulated", j.at("simulated")},
                     {"reference", j.at("reference")},
                     {"assertions", j.at("assertions")},
                     {"all_passed", j.at("all_passed")}};
    all = all && j.at("all_passed").get<bool>();
  }

  ExperimentReport rep;
  rep.experiment = "report";
  rep.simulated = summary;
  rep.check("all_inputs_passed", all, std::to_string(inputs.size()) + " report(s)");

  if (summary.contains("freq-sweep")) {
    std::vector<double> f, sim, ref_f, ref;
    const auto& rows = summary["freq-sweep"]["simulated"]["rows"];
    const double base = rows.at(0).at("rmse_mm").get<double>();
    for (const auto& r : rows) {
      f.push_back(r.at("freq_hz").get<double>());
      sim.push_back(r.at("rmse_mm").get<double>() / base);
    }
    for (const auto& r : reference::kFreqSweep) {
      ref_f.push_back(r.freq);
      ref.push_back(r.rmse / reference::kSweepBaselineRmse);
    }
    run.write("summary_sweep.svg",
              io::svg_plot({{"simulated", f, sim, kPalette[0]}, {"hardware reference", ref_f, ref, kPalette[1]}},
                           {"RMSE relative to 0 Hz", "vibration frequency [Hz]", "relative RMSE", false, true}));
  }
  if (summary.contains("compensate")) {
    const auto& rows = summary["compensate"]["simulated"];
    if (rows.contains("rows")) {
      std::vector<double> tiers_nv, nv, tiers_v, v;
      for (const auto& r : rows["rows"]) {
        const double rel = r.at("compensated").at("mae_mm").get<double>() / r.at("uncompensated").at("mae_mm").get<double>();
        if (r.at("condition") == "vib") {
          tiers_v.push_back(r.at("tier").get<double>());
          v.push_back(rel);
        } else {
          tiers_nv.push_back(r.at("tier").get<double>());
          nv.push_back(rel);
        }
      }
      std::vector<double> ref_t(std::begin(reference::kTierTargets), std::end(reference::kTierTargets));
      std::vector<double> ref_nv, ref_v;
      for (std::size_t i = 0; i < 4; ++i) {
        ref_nv.push_back(reference::kCompensation[2 + 2 * i].mae / reference::kCompensation[0].mae);
        ref_v.push_back(reference::kCompensation[3 + 2 * i].mae / reference::kCompensation[1].mae);
      }
      run.write("summary_compensation.svg",
                io::svg_plot({{"no-vib (simulated)", tiers_nv, nv, kPalette[1]},
                              {"vib (simulated)", tiers_v, v, kPalette[0]},
                              {"no-vib reference", ref_t, ref_nv, kPalette[3]},
                              {"vib reference", ref_t, ref_v, kPalette[2]}},
                             {"Compensated / uncompensated MAE", "tier", "MAE ratio", true, true}));
    }
  }
  run.write_json("summary.json", summary);
  return run.finish(&rep, nlohmann::json::object(), {{"inputs", inputs}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tendon-sheath hysteresis simulator with vibration-assisted inverse-model compensation"};
  app.set_version_flag("--version", TSM_VERSION);
  app.require_subcommand(1);

  CommonOptions opt;
  opt.arguments.assign(argv + 1, argv + argc);
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON configuration file");
    sub->add_option("--seed", opt.seed, "Override the command's primary seed");
    sub->add_option("--out", opt.out_dir, "Output directory")->required();
  };

  double freq = 0.0;
  std::string kind = "random";
  std::size_t length = 3300;
  auto* sim = app.add_subcommand("simulate", "Run one closed-loop episode");
  common(sim);
  sim->add_option("--freq", freq, "Vibration frequency [Hz]")->check(CLI::Range(0.0, 100.0));
  sim->add_option("--trajectory", kind, "Trajectory source")->check(CLI::IsMember({"random", "sinusoid"}));
  sim->add_option("--length", length, "Random trajectory length [samples]")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("freq-sweep", "RMSE and correlation across vibration frequencies");
  common(sweep);
  auto* sinus = app.add_subcommand("sinusoid-study", "Gain and hysteresis loops on raised-cosine trajectories");
  common(sinus);
  auto* gen = app.add_subcommand("gen-data", "Generate the paired no-vib and vib datasets");
  common(gen);

  std::string condition;
  std::size_t size = 354;
  auto* tr = app.add_subcommand("train", "Train one inverse model");
  common(tr);
  tr->add_option("--condition", condition, "Dataset condition")->required()->check(
      CLI::IsMember({"vib", "no-vib", "no_vib"}));
  tr->add_option("--size", size, "Size tier")->check(CLI::IsMember(std::vector<std::size_t>{354, 1282, 4866, 18946}));

  auto* abl = app.add_subcommand("ablate", "Train every size tier on both conditions over all seeds");
  common(abl);

  std::string checkpoint, ablation_dir, deploy_condition;
  auto* comp = app.add_subcommand("compensate", "Deploy trained inverse models on an unseen trajectory");
  common(comp);
  comp->add_option("--checkpoint", checkpoint, "Checkpoint written by train");
  comp->add_option("--ablation", ablation_dir, "Output directory of ablate");
  comp->add_option("--condition", deploy_condition, "Deployment condition (defaults to the trained one)")
      ->check(CLI::IsMember({"vib", "no-vib", "no_vib"}));

  std::vector<std::string> inputs;
  auto* rep = app.add_subcommand("report", "Combine experiment reports with the hardware reference values");
  common(rep);
  rep->add_option("--in", inputs, "Experiment output directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(opt, freq, kind, length);
    if (*sweep) return cmd_freq_sweep(opt);
    if (*sinus) return cmd_sinusoid(opt);
    if (*gen) return cmd_gen_data(opt);
    if (*tr) return cmd_train(opt, condition, size);
    if (*abl) return cmd_ablate(opt);
    if (*comp) return cmd_compensate(opt, checkpoint, ablation_dir, deploy_condition);
    if (*rep) return cmd_report(opt, inputs);
  } catch (const SimulationDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
