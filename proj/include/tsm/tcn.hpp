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
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsm/trajgen.hpp"

namespace tsm {

/// Number of residual blocks for sequence length L and kernel size k,
/// ceil(log2((L - 1) / (2k - 2)) + 1), never less than one.
std::size_t num_blocks(std::size_t seq_len, std::size_t kernel_size);

/// 1 + 2 (k - 1)(2^nb - 1): inputs further back than this cannot reach the output.
std::size_t receptive_field(std::size_t kernel_size, std::size_t n_blocks);

struct TcnConfig {
  std::size_t kernel_size = 3;
  std::size_t seq_len = 40;
  std::size_t in_channels = 1;
  std::vector<std::size_t> channels;  // c_out of each residual block
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 300;
  std::size_t patience = 30;
  std::uint64_t seed = 0;

  std::size_t n_blocks() const noexcept { return channels.size(); }
  std::size_t dilation(std::size_t block) const noexcept { return std::size_t{1} << block; }

  /// Structural checks only (any number of blocks, including none).
  void validate_structure() const;
  /// Structure plus block count consistent with num_blocks(L, k) and a
  /// receptive field covering the sequence.
  void validate() const;
};

void to_json(nlohmann::json& j, const TcnConfig& c);
void from_json(const nlohmann::json& j, TcnConfig& c);

/// 2 * sum_{n=1}^{nb-1} c_{n-1} c_n k + c_in c_0. Ignores biases, gains,
/// the first block's second convolution, downsampling and the head.
std::size_t param_count_formula(const TcnConfig& config);

/// Exact trainable-parameter count of the architecture `config` describes.
std::size_t exact_param_count(const TcnConfig& config);

/// Channel plan for one size tier: widths [c]*m + [c+1]*(nb-m) whose exact
/// count is closest to `target` (constant width when that is best).
std::vector<std::size_t> channels_for_target(std::size_t target, std::size_t seq_len, std::size_t kernel_size,
                                             std::size_t in_channels = 1);

struct Standardization {
  double x_mean = 0.0;
  double x_std = 1.0;
  double y_mean = 0.0;
  double y_std = 1.0;
};

void to_json(nlohmann::json& j, const Standardization& s);
void from_json(const nlohmann::json& j, Standardization& s);

/// Windows of measured history (row-major, n x L * c_in, time then channel)
/// and the command each window should predict.
struct WindowedDataset {
  std::size_t seq_len = 0;
  std::size_t in_channels = 1;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t size() const noexcept { return y.size(); }
  std::span<const double> window(std::size_t i) const {
    return std::span<const double>(x).subspan(i * seq_len * in_channels, seq_len * in_channels);
  }
  void push(std::span<const double> window, double target);
};

/// Single-channel windows ending at each index in [first_target, last_target).
/// Samples before the start of `inputs` are zero.
WindowedDataset make_windows(std::span<const double> inputs, std::span<const double> targets, std::size_t seq_len,
                             std::size_t first_target, std::size_t last_target);

/// Layout of one weight-normalized causal convolution inside the flat
/// parameter vector. v is stored [c_out][c_in][k]; tap j multiplies x[t - d j].
struct ConvLayout {
  std::size_t c_in = 0, c_out = 0, kernel = 0, dilation = 1;
  std::size_t v = 0, g = 0, b = 0;
};

struct DownsampleLayout {
  std::size_t c_in = 0, c_out = 0;
  std::size_t w = 0, b = 0;
};

struct BlockLayout {
  ConvLayout conv1, conv2;
  bool has_downsample = false;
  DownsampleLayout downsample;
};

class TcnModel {
 public:
  /// All parameters zero, identity standardization.
  explicit TcnModel(TcnConfig config);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; each gain starts at
  /// the norm of its direction tensor.
  static TcnModel initialized(TcnConfig config, Rng& rng);

  const TcnConfig& config() const noexcept { return config_; }
  const std::vector<BlockLayout>& blocks() const noexcept { return blocks_; }
  std::size_t head_w() const noexcept { return head_w_; }
  std::size_t head_b() const noexcept { return head_b_; }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::size_t exact_param_count() const noexcept { return params_.size(); }

  Standardization stats;

  /// Raw window of L * c_in samples (mm) to a command estimate (mm).
  double forward(std::span<const double> window) const;

  std::vector<double> predict(const WindowedDataset& data) const;

  /// Mean squared error in mm^2 over the given rows.
  double loss(const WindowedDataset& data, std::span<const std::size_t> rows) const;
  double loss(const WindowedDataset& data) const;

  /// Loss over the rows and its gradient with respect to every parameter.
  double loss_and_gradient(const WindowedDataset& data, std::span<const std::size_t> rows,
                           std::span<double> gradient) const;

  /// Positions each layer must produce so the head's final-step read is exact.
  struct Support {
    std::vector<std::vector<int>> block_out;  // per block
    std::vector<std::vector<int>> conv1_out;  // per block
    std::vector<int> input;
  };
  const Support& support() const noexcept { return support_; }

 private:
  TcnConfig config_;
  std::vector<BlockLayout> blocks_;
  std::size_t head_w_ = 0;
  std::size_t head_b_ = 0;
  std::vector<double> params_;
  Support support_;

  double run(const WindowedDataset& data, std::span<const std::size_t> rows, std::span<double> gradient,
             std::vector<double>* predictions) const;
};

std::vector<double> backward(const TcnModel& model, const WindowedDataset& batch);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainResult {
  TcnModel model;
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
};

/// Dataset statistics: x over every training window sample, y over targets.
Standardization standardization_for(const WindowedDataset& train);

/// Adam on MSE with shuffled mini-batches; keeps the weights of the best
/// validation epoch and stops after `patience` epochs without improvement.
TrainResult train(const TcnConfig& config, const WindowedDataset& train_set, const WindowedDataset& val_set,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Versioned JSON checkpoint holding config, statistics, the flat parameter
/// vector and free-form metadata.
nlohmann::json checkpoint_json(const TcnModel& model, const nlohmann::json& metadata = {});
TcnModel model_from_checkpoint(const nlohmann::json& j);
inline constexpr const char* kCheckpointFormat = "tsm-tcn-checkpoint/1";

}  // namespace tsm
