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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "tcn_oracles.hpp"
#include "tsm/error.hpp"
#include "tsm/tcn.hpp"

namespace tsm {
namespace {

using testing::finite_difference_check;
using testing::naive_features;
using testing::naive_forward;
using testing::random_model;
using testing::small_config;
using testing::synthetic_dataset;

TEST(NumBlocks, Examples) {
  EXPECT_EQ(num_blocks(40, 3), 5u);
  EXPECT_EQ(num_blocks(2, 2), 1u);
  EXPECT_EQ(num_blocks(40, 7), 3u);
}

TEST(NumBlocks, InvalidArgumentsThrow) {
  EXPECT_THROW(num_blocks(1, 3), InvalidConfig);
  EXPECT_THROW(num_blocks(40, 1), InvalidConfig);
}

TEST(NumBlocks, ReceptiveFieldCoversTheSequence) {
  for (std::size_t L = 2; L <= 300; ++L) {
    for (std::size_t k = 2; k <= 9; ++k) EXPECT_GE(receptive_field(k, num_blocks(L, k)), L) << L << " " << k;
  }
  EXPECT_EQ(receptive_field(3, 5), 125u);
}

TcnConfig config_with(std::vector<std::size_t> channels, std::size_t k = 3, std::size_t c_in = 1) {
  TcnConfig c;
  c.kernel_size = k;
  c.in_channels = c_in;
  c.channels = std::move(channels);
  return c;
}

TEST(ParamCount, FormulaExamples) {
  EXPECT_EQ(param_count_formula(config_with({4, 4, 4, 4, 4})), 388u);
  EXPECT_EQ(param_count_formula(config_with({7})), 7u);
  EXPECT_EQ(param_count_formula(config_with({7}, 3, 2)), 14u);
}

TEST(ParamCount, ExactHandCount) {
  // Block 0: conv1 4*1*3 + 8, conv2 4*4*3 + 8, downsample 4 + 4.
  // Blocks 1-4: two 4*4*3 + 8 convolutions each. Head: 4 + 1.
  EXPECT_EQ(exact_param_count(config_with({4, 4, 4, 4, 4})), 84u + 4u * 112u + 5u);
  EXPECT_EQ(exact_param_count(config_with({})), 2u);
  EXPECT_EQ(TcnModel(config_with({})).exact_param_count(), 2u);
}

TEST(ParamCount, RandomConfigsAgainstHandSummation) {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto cfg = testing::random_structure(rng);
    const auto hand = testing::hand_count(cfg);
    EXPECT_EQ(param_count_formula(cfg), hand.formula);
    EXPECT_EQ(exact_param_count(cfg), hand.exact);
    EXPECT_EQ(TcnModel(cfg).exact_param_count(), hand.exact);
    EXPECT_GE(exact_param_count(cfg), param_count_formula(cfg));
  }
}

TEST(ParamCount, DoublingWidthsQuadruplesConvTerms) {
  const double a = static_cast<double>(exact_param_count(config_with({16, 16, 16, 16, 16})));
  const double b = static_cast<double>(exact_param_count(config_with({32, 32, 32, 32, 32})));
  EXPECT_NEAR(b / a, 4.0, 0.25);
}

TEST(ParamCount, TierPlansLandNearTargets) {
  for (std::size_t target : {354u, 1282u, 4866u, 18946u}) {
    auto cfg = config_with(channels_for_target(target, 40, 3));
    EXPECT_EQ(cfg.channels.size(), 5u);
    EXPECT_NO_THROW(cfg.validate());
    const double n = static_cast<double>(exact_param_count(cfg));
    EXPECT_LT(std::abs(n - static_cast<double>(target)), 0.1 * static_cast<double>(target)) << target;
  }
}

TEST(Config, ValidateChecksBlockCount) {
  auto c = config_with({4, 4, 4, 4});
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = small_config();
  c.channels[2] = 0;
  EXPECT_THROW(c.validate_structure(), InvalidConfig);
}

TEST(Config, JsonRoundTrip) {
  auto c = small_config(17);
  c.learning_rate = 3e-4;
  const auto back = nlohmann::json(c).get<TcnConfig>();
  EXPECT_EQ(back.channels, c.channels);
  EXPECT_EQ(back.seed, 17u);
  EXPECT_EQ(back.learning_rate, 3e-4);
}

TEST(Windows, ZeroPaddedCausalHistory) {
  const std::vector<double> in{1, 2, 3, 4, 5};
  const std::vector<double> out{10, 20, 30, 40, 50};
  const auto d = make_windows(in, out, 3, 0, 5);
  ASSERT_EQ(d.size(), 5u);
  EXPECT_EQ(std::vector<double>(d.window(0).begin(), d.window(0).end()), (std::vector<double>{0, 0, 1}));
  EXPECT_EQ(std::vector<double>(d.window(4).begin(), d.window(4).end()), (std::vector<double>{3, 4, 5}));
  EXPECT_EQ(d.y[4], 50.0);
  EXPECT_THROW(make_windows(in, out, 3, 2, 6), DimensionMismatch);
}

TEST(Windows, PushRejectsWrongLength) {
  WindowedDataset d;
  d.seq_len = 4;
  const std::vector<double> w(3, 0.0);
  EXPECT_THROW(d.push(w, 0.0), ShapeError);
}

TEST(Standardize, PopulationStatistics) {
  WindowedDataset d;
  d.seq_len = 2;
  d.push(std::vector<double>{0.0, 2.0}, 1.0);
  d.push(std::vector<double>{4.0, 6.0}, 1.0);
  const auto s = standardization_for(d);
  EXPECT_DOUBLE_EQ(s.x_mean, 3.0);
  EXPECT_DOUBLE_EQ(s.x_std, std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(s.y_mean, 1.0);
  EXPECT_DOUBLE_EQ(s.y_std, 1.0);  // zero spread falls back to one
}

TEST(Forward, WrongWindowLengthThrows) {
  const auto m = random_model(1);
  const std::vector<double> w(39, 0.0);
  EXPECT_THROW(m.forward(w), ShapeError);
  WindowedDataset d;
  d.seq_len = 20;
  d.push(std::vector<double>(20, 0.0), 0.0);
  EXPECT_THROW(m.predict(d), ShapeError);
}

TEST(Forward, ZeroWeightsGiveTheMean) {
  TcnModel m(small_config());
  m.stats = {5.0, 2.0, 9.25, 3.0};
  const auto d = synthetic_dataset(5, 40, 2);
  for (double y : m.predict(d)) EXPECT_EQ(y, 9.25);
}

TEST(Forward, IdentityBlockReturnsTheFinalSample) {
  auto cfg = config_with({1});
  cfg.seq_len = 6;
  TcnModel m(cfg);
  const auto& b = m.blocks().front();
  auto p = m.parameters();
  p[b.conv1.v] = 1.0;  // tap 0: current sample
  p[b.conv1.g] = 1.0;
  // conv2 gain zero, so the block reduces to relu(x) through the residual path.
  p[m.head_w()] = 1.0;
  const std::vector<double> w{0.5, 4.0, 2.0, 7.0, 1.0, 3.25};
  EXPECT_DOUBLE_EQ(m.forward(w), 3.25);
}

TEST(Forward, PrunedPassMatchesFullSequenceOracle) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    auto cfg = seed % 2 ? small_config() : config_with({5, 6, 6, 7, 5});
    const auto m = random_model(seed, cfg);
    const auto d = synthetic_dataset(12, 40, seed + 100);
    const auto got = m.predict(d);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double ref = naive_forward(m, d.window(i));
      EXPECT_NEAR(got[i], ref, 1e-12 * std::max(1.0, std::abs(ref)));
      EXPECT_NEAR(m.forward(d.window(i)), got[i], 1e-12 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST(Forward, CausalFeatures) {
  const auto m = random_model(3);
  const auto d = synthetic_dataset(1, 40, 5);
  const std::vector<double> base(d.window(0).begin(), d.window(0).end());
  const auto h0 = naive_features(m, base);
  for (std::size_t t : {0u, 10u, 25u, 39u}) {
    auto w = base;
    w[t] += 3.0;
    const auto h = naive_features(m, w);
    for (std::size_t c = 0; c < h.size(); ++c) {
      for (std::size_t s = 0; s < t; ++s) EXPECT_EQ(h[c][s], h0[c][s]);
    }
  }
}

TEST(Forward, FinalSampleMattersButOutsideReceptiveFieldDoesNot) {
  auto cfg = config_with({3, 3}, 2);
  cfg.seq_len = 20;  // receptive field 1 + 2 * 1 * 3 = 7
  const auto m = random_model(4, cfg);
  const auto d = synthetic_dataset(1, 20, 6);
  const std::vector<double> base(d.window(0).begin(), d.window(0).end());
  const double y0 = m.forward(base);
  for (std::size_t t = 0; t + 7 <= 19; ++t) {
    auto w = base;
    w[t] = -50.0;
    EXPECT_EQ(m.forward(w), y0) << t;
  }
  auto w = base;
  w[19] = 0.0;
  EXPECT_NE(m.forward(w), y0);
  EXPECT_EQ(m.support().input.front(), 13);
}

TEST(Forward, WeightNormScaleInvariance) {
  auto m = random_model(8);
  const auto d = synthetic_dataset(8, 40, 9);
  const auto before = m.predict(d);
  auto p = m.parameters();
  for (const auto& b : m.blocks()) {
    for (const auto* c : {&b.conv1, &b.conv2}) {
      for (std::size_t i = 0; i < c->c_out * c->c_in * c->kernel; ++i) p[c->v + i] *= 3.7;
    }
  }
  const auto after = m.predict(d);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(after[i], before[i], 1e-12 * std::abs(before[i]) + 1e-13);
}

TEST(Gradient, MatchesFiniteDifferencesOverEightBatches) {
  const auto d = synthetic_dataset(8 * 16, 40, 21);
  for (std::size_t batch = 0; batch < 8; ++batch) {
    const auto m = random_model(30 + batch);
    ASSERT_LE(m.exact_param_count(), 400u);
    std::vector<std::size_t> rows(16);
    std::iota(rows.begin(), rows.end(), batch * 16);
    const auto r = finite_difference_check(m, d, rows);
    EXPECT_EQ(r.checked, m.exact_param_count());
    EXPECT_LT(r.max_rel_error, 1e-4) << "batch " << batch;
  }
}

TEST(Gradient, HeadBiasIsScaledMeanResidual) {
  const auto m = random_model(2);
  const auto d = synthetic_dataset(10, 40, 3);
  const auto g = backward(m, d);
  const auto pred = m.predict(d);
  double mean_res = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) mean_res += pred[i] - d.y[i];
  mean_res /= static_cast<double>(d.size());
  EXPECT_NEAR(g[m.head_b()], 2.0 * mean_res * m.stats.y_std, 1e-12 * std::abs(g[m.head_b()]) + 1e-14);
}

TEST(Gradient, DuplicatedSampleCountsTwice) {
  const auto m = random_model(6);
  const auto d = synthetic_dataset(2, 40, 12);
  const std::size_t np = m.exact_param_count();
  std::vector<double> g0(np), g1(np), g001(np);
  const std::vector<std::size_t> r0{0}, r1{1}, r001{0, 0, 1};
  m.loss_and_gradient(d, r0, g0);
  m.loss_and_gradient(d, r1, g1);
  m.loss_and_gradient(d, r001, g001);
  for (std::size_t i = 0; i < np; ++i) {
    const double ref = (2.0 * g0[i] + g1[i]) / 3.0;
    EXPECT_NEAR(g001[i], ref, 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST(Gradient, NonFiniteLossRaises) {
  auto m = random_model(1);
  m.stats.y_std = 1e300;
  m.parameters()[m.head_b()] = 1e300;
  const auto d = synthetic_dataset(2, 40, 1);
  EXPECT_THROW(m.loss(d), TrainingDiverged);
  std::vector<double> g(m.exact_param_count());
  const std::vector<std::size_t> rows{0, 1};
  EXPECT_THROW(m.loss_and_gradient(d, rows, g), TrainingDiverged);
}

TcnConfig train_config(std::size_t epochs) {
  auto c = small_config(5);
  c.epochs = epochs;
  c.patience = epochs;
  c.batch_size = 32;
  c.learning_rate = 1e-2;
  return c;
}

TEST(Train, ConstantTargetConverges) {
  auto tr = synthetic_dataset(1024, 40, 1);
  auto va = synthetic_dataset(128, 40, 2);
  std::fill(tr.y.begin(), tr.y.end(), 6.5);
  std::fill(va.y.begin(), va.y.end(), 6.5);
  const auto r = train(train_config(60), tr, va);
  EXPECT_LT(r.best_val_mse, 1e-6);
}

TEST(Train, LearnsTheFinalSample) {
  // y = x at the final step: the identity map through the residual path.
  auto make = [](std::size_t n, std::uint64_t seed) {
    auto d = synthetic_dataset(n, 40, seed);
    for (std::size_t i = 0; i < d.size(); ++i) d.y[i] = d.window(i)[39];
    return d;
  };
  const auto r = train(train_config(50), make(4096, 3), make(256, 4));
  EXPECT_LT(r.best_val_mse, 1e-4);
  EXPECT_LE(r.curve.size(), 50u);
}

TEST(Train, BestWeightsAndEarlyStop) {
  const auto tr = synthetic_dataset(256, 40, 7);
  const auto va = synthetic_dataset(64, 40, 8);
  auto cfg = train_config(40);
  cfg.patience = 3;
  cfg.learning_rate = 0.05;
  std::vector<EpochRecord> seen;
  const auto r = train(cfg, tr, va, [&](const EpochRecord& e) { seen.push_back(e); });
  EXPECT_EQ(seen.size(), r.curve.size());
  double best = 1e300;
  for (const auto& e : r.curve) best = std::min(best, e.val_mse);
  EXPECT_EQ(r.best_val_mse, best);
  EXPECT_EQ(r.curve[r.best_epoch - 1].val_mse, best);
  EXPECT_DOUBLE_EQ(r.model.loss(va), best);
  if (r.curve.size() < cfg.epochs) {
    EXPECT_EQ(r.curve.size(), r.best_epoch + cfg.patience);
  }
}

TEST(Train, SeededDeterminism) {
  const auto tr = synthetic_dataset(200, 40, 1);
  const auto va = synthetic_dataset(50, 40, 2);
  const auto a = train(train_config(3), tr, va);
  const auto b = train(train_config(3), tr, va);
  auto other = train_config(3);
  other.seed = 6;
  const auto c = train(other, tr, va);
  EXPECT_TRUE(std::equal(a.model.parameters().begin(), a.model.parameters().end(), b.model.parameters().begin()));
  EXPECT_FALSE(std::equal(a.model.parameters().begin(), a.model.parameters().end(), c.model.parameters().begin()));
}

TEST(Train, EmptySetsThrow) {
  WindowedDataset empty;
  empty.seq_len = 40;
  const auto va = synthetic_dataset(5, 40, 2);
  EXPECT_THROW(train(train_config(1), empty, va), InsufficientData);
  EXPECT_THROW(train(train_config(1), va, empty), InsufficientData);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  const auto m = random_model(11);
  const auto j = checkpoint_json(m, {{"tier", 354}});
  EXPECT_EQ(j.at("format"), kCheckpointFormat);
  EXPECT_EQ(j.at("metadata").at("tier"), 354);
  const auto back = model_from_checkpoint(nlohmann::json::parse(j.dump()));
  const auto d = synthetic_dataset(6, 40, 4);
  EXPECT_EQ(back.predict(d), m.predict(d));
}

TEST(Checkpoint, RejectsForeignOrTruncated) {
  const auto m = random_model(11);
  auto j = checkpoint_json(m);
  j["format"] = "something-else";
  EXPECT_THROW(model_from_checkpoint(j), InvalidConfig);
  j = checkpoint_json(m);
  j["parameters"].erase(0);
  EXPECT_THROW(model_from_checkpoint(j), ShapeError);
}

}  // namespace
}  // namespace tsm
