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

#include "tsm/tcn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <Eigen/Dense>

#include "tsm/error.hpp"

namespace tsm {

using Mat = Eigen::MatrixXd;

std::size_t num_blocks(std::size_t seq_len, std::size_t kernel_size) {
  if (seq_len < 2 || kernel_size < 2) {
    throw InvalidConfig("num_blocks needs L >= 2 and k >= 2, got L=" + std::to_string(seq_len) +
                        ", k=" + std::to_string(kernel_size));
  }
  const double ratio = static_cast<double>(seq_len - 1) / static_cast<double>(2 * kernel_size - 2);
  const double nb = std::ceil(std::log2(ratio) + 1.0);
  return nb < 1.0 ? 1 : static_cast<std::size_t>(nb);
}

std::size_t receptive_field(std::size_t kernel_size, std::size_t n_blocks) {
  return 1 + 2 * (kernel_size - 1) * ((std::size_t{1} << n_blocks) - 1);
}

void TcnConfig::validate_structure() const {
  if (kernel_size < 1) throw InvalidConfig("kernel_size must be at least 1");
  if (seq_len < 1) throw InvalidConfig("seq_len must be at least 1");
  if (in_channels < 1) throw InvalidConfig("in_channels must be at least 1");
  for (auto c : channels) {
    if (c < 1) throw InvalidConfig("every block needs at least one channel");
  }
  if (channels.size() > 30) throw InvalidConfig("too many residual blocks");
}

void TcnConfig::validate() const {
  validate_structure();
  const std::size_t nb = num_blocks(seq_len, kernel_size);
  if (channels.size() != nb) {
    throw InvalidConfig("config has " + std::to_string(channels.size()) + " blocks but L=" + std::to_string(seq_len) +
                        ", k=" + std::to_string(kernel_size) + " needs " + std::to_string(nb));
  }
  if (receptive_field(kernel_size, nb) < seq_len) throw InvalidConfig("receptive field shorter than seq_len");
  if (!(learning_rate > 0.0)) throw InvalidConfig("learning_rate must be positive");
  if (batch_size < 1) throw InvalidConfig("batch_size must be at least 1");
}

void to_json(nlohmann::json& j, const TcnConfig& c) {
  j = nlohmann::json{{"kernel_size", c.kernel_size}, {"seq_len", c.seq_len},   {"in_channels", c.in_channels},
                     {"channels", c.channels},       {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},   {"epochs", c.epochs},     {"patience", c.patience},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TcnConfig& c) {
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.seq_len = j.value("seq_len", c.seq_len);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.channels = j.value("channels", c.channels);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
}

std::size_t param_count_formula(const TcnConfig& config) {
  if (config.channels.empty()) return 0;
  std::size_t sum = 0;
  for (std::size_t n = 1; n < config.channels.size(); ++n) {
    sum += config.channels[n - 1] * config.channels[n] * config.kernel_size;
  }
  return 2 * sum + config.in_channels * config.channels[0];
}

std::size_t exact_param_count(const TcnConfig& config) {
  config.validate_structure();
  const std::size_t k = config.kernel_size;
  std::size_t total = 0;
  std::size_t in = config.in_channels;
  for (std::size_t out : config.channels) {
    total += out * in * k + 2 * out;   // conv1: v, g, b
    total += out * out * k + 2 * out;  // conv2
    if (in != out) total += in * out + out;
    in = out;
  }
  return total + in + 1;
}

std::vector<std::size_t> channels_for_target(std::size_t target, std::size_t seq_len, std::size_t kernel_size,
                                             std::size_t in_channels) {
  const std::size_t nb = num_blocks(seq_len, kernel_size);
  TcnConfig probe;
  probe.seq_len = seq_len;
  probe.kernel_size = kernel_size;
  probe.in_channels = in_channels;
  std::vector<std::size_t> best;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t c = 1; c <= 512; ++c) {
    // m = nb is the constant-width plan; it is tried first so ties keep it.
    for (std::size_t m = nb + 1; m-- > 0;) {
      std::vector<std::size_t> ch(nb, c + 1);
      std::fill(ch.begin(), ch.begin() + static_cast<std::ptrdiff_t>(m), c);
      probe.channels = ch;
      const double count = static_cast<double>(exact_param_count(probe));
      const double err = std::abs(count - static_cast<double>(target));
      if (err < best_err) {
        best_err = err;
        best = ch;
      }
    }
    probe.channels.assign(nb, c);
    if (static_cast<double>(exact_param_count(probe)) > 2.0 * static_cast<double>(target)) break;
  }
  return best;
}

void to_json(nlohmann::json& j, const Standardization& s) {
  j = nlohmann::json{{"x_mean", s.x_mean}, {"x_std", s.x_std}, {"y_mean", s.y_mean}, {"y_std", s.y_std}};
}

void from_json(const nlohmann::json& j, Standardization& s) {
  j.at("x_mean").get_to(s.x_mean);
  j.at("x_std").get_to(s.x_std);
  j.at("y_mean").get_to(s.y_mean);
  j.at("y_std").get_to(s.y_std);
}

void WindowedDataset::push(std::span<const double> window, double target) {
  if (window.size() != seq_len * in_channels) {
    throw ShapeError("window has " + std::to_string(window.size()) + " samples, expected " +
                     std::to_string(seq_len * in_channels));
  }
  x.insert(x.end(), window.begin(), window.end());
  y.push_back(target);
}

WindowedDataset make_windows(std::span<const double> inputs, std::span<const double> targets, std::size_t seq_len,
                             std::size_t first_target, std::size_t last_target) {
  if (inputs.size() != targets.size()) throw DimensionMismatch("inputs and targets differ in length");
  if (last_target > inputs.size() || first_target > last_target) throw DimensionMismatch("target range out of bounds");
  WindowedDataset d;
  d.seq_len = seq_len;
  d.in_channels = 1;
  d.x.reserve((last_target - first_target) * seq_len);
  d.y.reserve(last_target - first_target);
  std::vector<double> w(seq_len);
  for (std::size_t t = first_target; t < last_target; ++t) {
    for (std::size_t i = 0; i < seq_len; ++i) {
      const auto back = static_cast<std::ptrdiff_t>(seq_len - 1 - i);
      const auto src = static_cast<std::ptrdiff_t>(t) - back;
      w[i] = src >= 0 ? inputs[static_cast<std::size_t>(src)] : 0.0;
    }
    d.push(w, targets[t]);
  }
  return d;
}

namespace {

std::vector<int> sorted(const std::set<int>& s) { return {s.begin(), s.end()}; }

// Effective weight matrix of a weight-normalized convolution, laid out so
// column j * c_in + ci multiplies input channel ci at lag d * j.
struct WeightNorm {
  Mat w;
  Eigen::VectorXd norm;
};

WeightNorm effective_weight(const ConvLayout& c, const double* p) {
  WeightNorm out{Mat(c.c_out, c.kernel * c.c_in), Eigen::VectorXd(c.c_out)};
  for (std::size_t co = 0; co < c.c_out; ++co) {
    const double* v = p + c.v + co * c.c_in * c.kernel;
    double sq = 0.0;
    for (std::size_t i = 0; i < c.c_in * c.kernel; ++i) sq += v[i] * v[i];
    const double n = std::sqrt(sq);
    out.norm(static_cast<Eigen::Index>(co)) = n;
    const double scale = n > 0.0 ? p[c.g + co] / n : 0.0;
    for (std::size_t ci = 0; ci < c.c_in; ++ci) {
      for (std::size_t j = 0; j < c.kernel; ++j) {
        out.w(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(j * c.c_in + ci)) =
            scale * v[ci * c.kernel + j];
      }
    }
  }
  return out;
}

struct ConvCache {
  WeightNorm wn;
  Mat col;  // (k c_in) x (B |P|)
  Mat pre;  // c_out x (B |P|)
  Mat d_pre, d_w, d_col;
};

// Activations are stored c x (B L) with column b * L + t; only the columns
// listed in a layer's support are ever written or read.
void conv_forward(const ConvLayout& c, const double* p, const Mat& in, const std::vector<int>& positions,
                  std::size_t batch, std::size_t L, ConvCache& cache, Mat& out) {
  const auto np = static_cast<Eigen::Index>(positions.size());
  const auto cin = static_cast<Eigen::Index>(c.c_in);
  cache.wn = effective_weight(c, p);
  cache.col.setZero(static_cast<Eigen::Index>(c.kernel) * cin, static_cast<Eigen::Index>(batch) * np);
  for (std::size_t b = 0; b < batch; ++b) {
    for (Eigen::Index pi = 0; pi < np; ++pi) {
      const int t = positions[static_cast<std::size_t>(pi)];
      const Eigen::Index col = static_cast<Eigen::Index>(b) * np + pi;
      for (std::size_t j = 0; j < c.kernel; ++j) {
        const int src = t - static_cast<int>(c.dilation * j);
        if (src < 0) break;
        cache.col.block(static_cast<Eigen::Index>(j) * cin, col, cin, 1) =
            in.col(static_cast<Eigen::Index>(b * L) + src);
      }
    }
  }
  cache.pre.noalias() = cache.wn.w * cache.col;
  const Eigen::Map<const Eigen::VectorXd> bias(p + c.b, static_cast<Eigen::Index>(c.c_out));
  cache.pre.colwise() += bias;
  for (std::size_t b = 0; b < batch; ++b) {
    for (Eigen::Index pi = 0; pi < np; ++pi) {
      out.col(static_cast<Eigen::Index>(b * L) + positions[static_cast<std::size_t>(pi)]) =
          cache.pre.col(static_cast<Eigen::Index>(b) * np + pi).cwiseMax(0.0);
    }
  }
}

void conv_backward(const ConvLayout& c, const double* p, ConvCache& cache, const Mat& d_out,
                   const std::vector<int>& positions, std::size_t batch, std::size_t L, double* grad, Mat& d_in) {
  const auto np = static_cast<Eigen::Index>(positions.size());
  const auto cin = static_cast<Eigen::Index>(c.c_in);
  Mat& d_pre = cache.d_pre;
  d_pre.resize(static_cast<Eigen::Index>(c.c_out), static_cast<Eigen::Index>(batch) * np);
  for (std::size_t b = 0; b < batch; ++b) {
    for (Eigen::Index pi = 0; pi < np; ++pi) {
      const Eigen::Index col = static_cast<Eigen::Index>(b) * np + pi;
      d_pre.col(col) = d_out.col(static_cast<Eigen::Index>(b * L) + positions[static_cast<std::size_t>(pi)]);
    }
  }
  d_pre = (cache.pre.array() > 0.0).select(d_pre, 0.0);

  Mat& d_w = cache.d_w;
  d_w.noalias() = d_pre * cache.col.transpose();
  Eigen::Map<Eigen::VectorXd> d_bias(grad + c.b, static_cast<Eigen::Index>(c.c_out));
  d_bias += d_pre.rowwise().sum();

  // w = g v / |v|:  dg = <dw, v>/|v|,  dv = (g/|v|)(dw - dg v/|v|).
  for (std::size_t co = 0; co < c.c_out; ++co) {
    const double n = cache.wn.norm(static_cast<Eigen::Index>(co));
    if (n == 0.0) continue;
    const double* v = p + c.v + co * c.c_in * c.kernel;
    double* dv = grad + c.v + co * c.c_in * c.kernel;
    const double g = p[c.g + co];
    double dot = 0.0;
    for (std::size_t ci = 0; ci < c.c_in; ++ci) {
      for (std::size_t j = 0; j < c.kernel; ++j) {
        dot += d_w(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(j * c.c_in + ci)) * v[ci * c.kernel + j];
      }
    }
    const double dg = dot / n;
    grad[c.g + co] += dg;
    for (std::size_t ci = 0; ci < c.c_in; ++ci) {
      for (std::size_t j = 0; j < c.kernel; ++j) {
        const double dw = d_w(static_cast<Eigen::Index>(co), static_cast<Eigen::Index>(j * c.c_in + ci));
        dv[ci * c.kernel + j] += (g / n) * (dw - dg * v[ci * c.kernel + j] / n);
      }
    }
  }

  Mat& d_col = cache.d_col;
  d_col.noalias() = cache.wn.w.transpose() * d_pre;
  for (std::size_t b = 0; b < batch; ++b) {
    for (Eigen::Index pi = 0; pi < np; ++pi) {
      const int t = positions[static_cast<std::size_t>(pi)];
      const Eigen::Index col = static_cast<Eigen::Index>(b) * np + pi;
      for (std::size_t j = 0; j < c.kernel; ++j) {
        const int src = t - static_cast<int>(c.dilation * j);
        if (src < 0) break;
        d_in.col(static_cast<Eigen::Index>(b * L) + src) += d_col.block(static_cast<Eigen::Index>(j) * cin, col, cin, 1);
      }
    }
  }
}

struct BlockCache {
  ConvCache conv1, conv2;
  Mat h1, h2, sum, out;
};

// Per-thread buffers reused across calls; setZero keeps the allocation when
// the shape is unchanged.
struct Workspace {
  Mat x;
  std::vector<BlockCache> caches;
  Mat d_current, d_input, d_h1, d_h2;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

}  // namespace

TcnModel::TcnModel(TcnConfig config) : config_(std::move(config)) {
  config_.validate_structure();
  std::size_t offset = 0;
  std::size_t in = config_.in_channels;
  const std::size_t k = config_.kernel_size;
  for (std::size_t n = 0; n < config_.channels.size(); ++n) {
    const std::size_t out = config_.channels[n];
    BlockLayout bl;
    auto conv = [&](std::size_t c_in) {
      ConvLayout c{c_in, out, k, config_.dilation(n), 0, 0, 0};
      c.v = offset;
      offset += out * c_in * k;
      c.g = offset;
      offset += out;
      c.b = offset;
      offset += out;
      return c;
    };
    bl.conv1 = conv(in);
    bl.conv2 = conv(out);
    if (in != out) {
      bl.has_downsample = true;
      bl.downsample = {in, out, offset, offset + in * out};
      offset += in * out + out;
    }
    blocks_.push_back(bl);
    in = out;
  }
  head_w_ = offset;
  offset += in;
  head_b_ = offset;
  offset += 1;
  params_.assign(offset, 0.0);

  // Dependency cone of the final time step, walked from the head backwards.
  const int L = static_cast<int>(config_.seq_len);
  support_.block_out.resize(blocks_.size());
  support_.conv1_out.resize(blocks_.size());
  std::set<int> need{L - 1};
  for (std::size_t n = blocks_.size(); n-- > 0;) {
    support_.block_out[n] = sorted(need);
    const int d = static_cast<int>(blocks_[n].conv1.dilation);
    std::set<int> h1;
    for (int t : need) {
      for (int j = 0; j < static_cast<int>(k); ++j) {
        if (t - d * j >= 0) h1.insert(t - d * j);
      }
    }
    support_.conv1_out[n] = sorted(h1);
    std::set<int> in_need = need;
    for (int t : h1) {
      for (int j = 0; j < static_cast<int>(k); ++j) {
        if (t - d * j >= 0) in_need.insert(t - d * j);
      }
    }
    need = std::move(in_need);
  }
  support_.input = sorted(need);
}

TcnModel TcnModel::initialized(TcnConfig config, Rng& rng) {
  TcnModel m(std::move(config));
  auto fill = [&](std::size_t offset, std::size_t count, double bound) {
    for (std::size_t i = 0; i < count; ++i) m.params_[offset + i] = rng.uniform(-bound, bound);
  };
  for (const auto& bl : m.blocks_) {
    for (const ConvLayout* c : {&bl.conv1, &bl.conv2}) {
      const std::size_t fan_in = c->c_in * c->kernel;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      fill(c->v, c->c_out * fan_in, bound);
      for (std::size_t co = 0; co < c->c_out; ++co) {
        double sq = 0.0;
        for (std::size_t i = 0; i < fan_in; ++i) sq += m.params_[c->v + co * fan_in + i] * m.params_[c->v + co * fan_in + i];
        m.params_[c->g + co] = std::sqrt(sq);
      }
      fill(c->b, c->c_out, bound);
    }
    if (bl.has_downsample) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(bl.downsample.c_in));
      fill(bl.downsample.w, bl.downsample.c_in * bl.downsample.c_out, bound);
      fill(bl.downsample.b, bl.downsample.c_out, bound);
    }
  }
  const std::size_t last = m.config_.channels.empty() ? m.config_.in_channels : m.config_.channels.back();
  const double bound = 1.0 / std::sqrt(static_cast<double>(last));
  fill(m.head_w_, last, bound);
  fill(m.head_b_, 1, bound);
  return m;
}

double TcnModel::run(const WindowedDataset& data, std::span<const std::size_t> rows, std::span<double> gradient,
                     std::vector<double>* predictions) const {
  const std::size_t L = config_.seq_len;
  const std::size_t cin = config_.in_channels;
  if (data.seq_len != L || data.in_channels != cin) {
    throw ShapeError("dataset windows are " + std::to_string(data.seq_len) + " x " + std::to_string(data.in_channels) +
                     ", model expects " + std::to_string(L) + " x " + std::to_string(cin));
  }
  const std::size_t batch = rows.size();
  if (batch == 0) return 0.0;
  const double* p = params_.data();
  const bool want_grad = !gradient.empty();

  Workspace& ws = workspace();
  Mat& x = ws.x;
  x.setZero(static_cast<Eigen::Index>(cin), static_cast<Eigen::Index>(batch * L));
  for (std::size_t b = 0; b < batch; ++b) {
    const auto w = data.window(rows[b]);
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t c = 0; c < cin; ++c) {
        x(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b * L + t)) =
            (w[t * cin + c] - stats.x_mean) / stats.x_std;
      }
    }
  }

  std::vector<BlockCache>& caches = ws.caches;
  caches.resize(blocks_.size());
  const Mat* current = &x;
  for (std::size_t n = 0; n < blocks_.size(); ++n) {
    const auto& bl = blocks_[n];
    auto& bc = caches[n];
    const auto cols = static_cast<Eigen::Index>(batch * L);
    const auto cout = static_cast<Eigen::Index>(bl.conv1.c_out);
    bc.h1.setZero(cout, cols);
    bc.h2.setZero(cout, cols);
    bc.sum.setZero(cout, cols);
    bc.out.setZero(cout, cols);
    conv_forward(bl.conv1, p, *current, support_.conv1_out[n], batch, L, bc.conv1, bc.h1);
    conv_forward(bl.conv2, p, bc.h1, support_.block_out[n], batch, L, bc.conv2, bc.h2);
    for (std::size_t b = 0; b < batch; ++b) {
      for (int t : support_.block_out[n]) {
        const Eigen::Index col = static_cast<Eigen::Index>(b * L) + t;
        if (bl.has_downsample) {
          const Eigen::Map<const Mat> w(p + bl.downsample.w, cout, static_cast<Eigen::Index>(bl.downsample.c_in));
          const Eigen::Map<const Eigen::VectorXd> bias(p + bl.downsample.b, cout);
          bc.sum.col(col) = bc.h2.col(col) + w * current->col(col) + bias;
        } else {
          bc.sum.col(col) = bc.h2.col(col) + current->col(col);
        }
        bc.out.col(col) = bc.sum.col(col).cwiseMax(0.0);
      }
    }
    current = &bc.out;
  }

  const auto last_c = static_cast<Eigen::Index>(current->rows());
  const Eigen::Map<const Eigen::VectorXd> head(p + head_w_, last_c);
  std::vector<double> residual(batch);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double h = head.dot(current->col(static_cast<Eigen::Index>(b * L + L - 1))) + p[head_b_];
    const double y_hat = stats.y_std * h + stats.y_mean;
    if (predictions) predictions->push_back(y_hat);
    residual[b] = y_hat - data.y[rows[b]];
    loss += residual[b] * residual[b];
  }
  loss /= static_cast<double>(batch);
  if (!std::isfinite(loss)) throw TrainingDiverged("non-finite loss");
  if (!want_grad) return loss;

  if (gradient.size() != params_.size()) throw ShapeError("gradient buffer has the wrong size");
  std::fill(gradient.begin(), gradient.end(), 0.0);
  double* g = gradient.data();

  Mat& d_current = ws.d_current;
  d_current.setZero(last_c, static_cast<Eigen::Index>(batch * L));
  for (std::size_t b = 0; b < batch; ++b) {
    const double dh = 2.0 * residual[b] * stats.y_std / static_cast<double>(batch);
    const Eigen::Index col = static_cast<Eigen::Index>(b * L + L - 1);
    for (Eigen::Index c = 0; c < last_c; ++c) g[head_w_ + static_cast<std::size_t>(c)] += dh * (*current)(c, col);
    g[head_b_] += dh;
    d_current.col(col) += dh * head;
  }

  for (std::size_t n = blocks_.size(); n-- > 0;) {
    const auto& bl = blocks_[n];
    auto& bc = caches[n];
    const Mat& input = n == 0 ? x : caches[n - 1].out;
    const auto cout = static_cast<Eigen::Index>(bl.conv1.c_out);
    const auto cols = static_cast<Eigen::Index>(batch * L);
    Mat& d_input = ws.d_input;
    Mat& d_h2 = ws.d_h2;
    d_input.setZero(input.rows(), cols);
    d_h2.setZero(cout, cols);
    for (std::size_t b = 0; b < batch; ++b) {
      for (int t : support_.block_out[n]) {
        const Eigen::Index col = static_cast<Eigen::Index>(b * L) + t;
        const Eigen::VectorXd d_sum = (bc.sum.col(col).array() > 0.0).select(d_current.col(col), 0.0);
        d_h2.col(col) = d_sum;
        if (bl.has_downsample) {
          const auto ds_in = static_cast<Eigen::Index>(bl.downsample.c_in);
          const Eigen::Map<const Mat> w(p + bl.downsample.w, cout, ds_in);
          Eigen::Map<Mat> dw(g + bl.downsample.w, cout, ds_in);
          Eigen::Map<Eigen::VectorXd> db(g + bl.downsample.b, cout);
          dw.noalias() += d_sum * input.col(col).transpose();
          db += d_sum;
          d_input.col(col).noalias() += w.transpose() * d_sum;
        } else {
          d_input.col(col) += d_sum;
        }
      }
    }
    Mat& d_h1 = ws.d_h1;
    d_h1.setZero(cout, cols);
    conv_backward(bl.conv2, p, bc.conv2, d_h2, support_.block_out[n], batch, L, g, d_h1);
    conv_backward(bl.conv1, p, bc.conv1, d_h1, support_.conv1_out[n], batch, L, g, d_input);
    d_current.swap(d_input);
  }
  return loss;
}

double TcnModel::forward(std::span<const double> window) const {
  WindowedDataset one;
  one.seq_len = config_.seq_len;
  one.in_channels = config_.in_channels;
  one.push(window, 0.0);
  std::vector<double> out;
  const std::size_t row = 0;
  run(one, std::span<const std::size_t>(&row, 1), {}, &out);
  return out.front();
}

std::vector<double> TcnModel::predict(const WindowedDataset& data) const {
  std::vector<double> out;
  out.reserve(data.size());
  constexpr std::size_t chunk = 256;
  std::vector<std::size_t> rows;
  for (std::size_t first = 0; first < data.size(); first += chunk) {
    rows.resize(std::min(chunk, data.size() - first));
    std::iota(rows.begin(), rows.end(), first);
    run(data, rows, {}, &out);
  }
  return out;
}

double TcnModel::loss(const WindowedDataset& data, std::span<const std::size_t> rows) const {
  return run(data, rows, {}, nullptr);
}

double TcnModel::loss(const WindowedDataset& data) const {
  if (data.size() == 0) throw InsufficientData("empty dataset");
  const auto pred = predict(data);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - data.y[i]) * (pred[i] - data.y[i]);
  return s / static_cast<double>(pred.size());
}

double TcnModel::loss_and_gradient(const WindowedDataset& data, std::span<const std::size_t> rows,
                                   std::span<double> gradient) const {
  if (gradient.empty()) throw ShapeError("gradient buffer must be sized to the parameter vector");
  return run(data, rows, gradient, nullptr);
}

std::vector<double> backward(const TcnModel& model, const WindowedDataset& batch) {
  std::vector<std::size_t> rows(batch.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<double> g(model.exact_param_count());
  model.loss_and_gradient(batch, rows, g);
  return g;
}

Standardization standardization_for(const WindowedDataset& train) {
  if (train.size() == 0) throw InsufficientData("cannot standardize an empty dataset");
  auto moments = [](std::span<const double> v) {
    double m = 0.0;
    for (double a : v) m += a;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double a : v) s += (a - m) * (a - m);
    s = std::sqrt(s / static_cast<double>(v.size()));
    return std::pair{m, s > 0.0 ? s : 1.0};
  };
  Standardization st;
  std::tie(st.x_mean, st.x_std) = moments(train.x);
  std::tie(st.y_mean, st.y_std) = moments(train.y);
  return st;
}

TrainResult train(const TcnConfig& config, const WindowedDataset& train_set, const WindowedDataset& val_set,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.size() == 0) throw InsufficientData("training set is empty");
  if (val_set.size() == 0) throw InsufficientData("validation set is empty");

  Rng rng(config.seed);
  TcnModel model = TcnModel::initialized(config, rng);
  model.stats = standardization_for(train_set);

  const std::size_t np = model.exact_param_count();
  std::vector<double> grad(np), m1(np, 0.0), m2(np, 0.0);
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  std::size_t t_step = 0;

  TrainResult result{model, {}, 0, std::numeric_limits<double>::infinity()};
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - first);
      const std::span<const std::size_t> rows(order.data() + first, count);
      const double l = model.loss_and_gradient(train_set, rows, grad);
      sum += l * static_cast<double>(count);
      ++t_step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_step));
      auto params = model.parameters();
      for (std::size_t i = 0; i < np; ++i) {
        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= config.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
      }
    }
    EpochRecord rec{epoch, sum / static_cast<double>(order.size()), model.loss(val_set)};
    if (!std::isfinite(rec.train_mse) || !std::isfinite(rec.val_mse)) {
      throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch));
    }
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.val_mse < result.best_val_mse) {
      result.best_val_mse = rec.val_mse;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= config.patience && config.patience > 0) {
      break;
    }
  }
  return result;
}

nlohmann::json checkpoint_json(const TcnModel& model, const nlohmann::json& metadata) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["config"] = model.config();
  j["stats"] = model.stats;
  j["param_count"] = model.exact_param_count();
  j["parameters"] = std::vector<double>(model.parameters().begin(), model.parameters().end());
  j["metadata"] = metadata.is_null() ? nlohmann::json::object() : metadata;
  return j;
}

TcnModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", std::string()) != kCheckpointFormat) {
    throw InvalidConfig("not a TCN checkpoint (expected format " + std::string(kCheckpointFormat) + ")");
  }
  TcnModel m(j.at("config").get<TcnConfig>());
  m.stats = j.at("stats").get<Standardization>();
  const auto params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != m.exact_param_count()) {
    throw ShapeError("checkpoint holds " + std::to_string(params.size()) + " parameters, architecture needs " +
                     std::to_string(m.exact_param_count()));
  }
  std::copy(params.begin(), params.end(), m.parameters().begin());
  return m;
}

}  // namespace tsm
