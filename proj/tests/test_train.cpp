#include <gtest/gtest.h>

#include <cmath>

#include "model_util.hpp"
#include "ptnet/train.hpp"

using namespace ptnet;
using testutil::bits_equal;
using testutil::random_tensor;
using testutil::tiny_config;

namespace {

std::vector<TrainSample> tiny_set(std::size_t n, std::uint64_t seed) {
  std::vector<TrainSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    data::SynthSpec s;
    s.seed = mix_seed(seed, i);
    s.width = 32;
    s.height = 16;
    s.rect_count = 1;
    s.disparity_max = 8;
    out.push_back(to_train_sample(data::degrade_pair(data::synth_stereo(s).pair, 10)));
  }
  return out;
}

TrainConfig quick(std::size_t steps) {
  TrainConfig c;
  c.lr = 1e-3;
  c.batch = 2;
  c.epochs = 100;
  c.max_steps = steps;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Schedule, StepDecayWithFloor) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 1), 2e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 20), 2e-4);
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 21), 2e-5);
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 41), 2e-6);
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 61), 2e-6);
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 200), 2e-6);
}

TEST(Adam, FirstStepMatchesClosedForm) {
  Param p{"p", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}), Tensor({3}, std::vector<double>{0.3, -0.1, 0.0})};
  Adam opt(0.9, 0.999, 1e-8);
  opt.step({&p}, 0.01);
  // Bias-corrected first step moves by lr * g / (|g| + eps).
  EXPECT_NEAR(p.value[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value[1], -2.0 + 0.01 * 0.1 / (0.1 + 1e-8), 1e-15);
  EXPECT_EQ(p.value[2], 0.5);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  PTNet m(tiny_config());
  testutil::randomize(m, 1);
  std::vector<Tensor> before;
  for (const Param* p : m.parameters()) before.push_back(p->value);
  TrainConfig c = quick(3);
  c.lr = 0.0;
  train(m, tiny_set(4, 2), {}, c);
  const auto after = m.parameters();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(bits_equal(before[i], after[i]->value));
}

TEST(Train, IdenticalSeedsGiveIdenticalLogs) {
  const auto set = tiny_set(4, 3);
  std::string logs[2];
  Tensor tails[2];
  for (int k = 0; k < 2; ++k) {
    PTNet m(tiny_config());
    m.init(9);
    logs[k] = train(m, set, {set[0]}, quick(6)).text();
    tails[k] = m.parameters().back()->value;
  }
  EXPECT_EQ(logs[0], logs[1]);
  EXPECT_TRUE(bits_equal(tails[0], tails[1]));
}

TEST(Train, StepReducesLossOnItsBatch) {
  PTNet m(tiny_config());
  m.init(4);
  const auto set = tiny_set(2, 4);
  Adam opt(0.9, 0.999, 1e-8);
  std::vector<const TrainSample*> batch{&set[0], &set[1]};
  const double first = train_step(m, opt, batch, 1e-3);
  double last = first;
  for (int i = 0; i < 15; ++i) last = train_step(m, opt, batch, 1e-3);
  EXPECT_LT(last, first);
  EXPECT_NEAR(first, evaluate_loss(PTNet(tiny_config()), set), 1e-9);
}

TEST(Train, SwapSymmetrySurvivesTraining) {
  PTNet m(tiny_config());
  m.init(6);
  train(m, tiny_set(4, 7), {}, quick(8));
  const Tensor l = random_tensor({1, 1, 16, 32}, 8, 0, 1), r = random_tensor({1, 1, 16, 32}, 9, 0, 1);
  const auto a = testutil::run(m, l, r), b = testutil::run(m, r, l);
  EXPECT_FALSE(bits_equal(a.first, l));
  EXPECT_TRUE(bits_equal(a.first, b.second));
  EXPECT_TRUE(bits_equal(a.second, b.first));
}

TEST(Infer, ArbitraryExtentsArePaddedAndCropped) {
  PTNet m(tiny_config());
  m.init(10);
  ImagePlane l(37, 21), r(37, 21);
  Rng rng(11);
  for (std::size_t i = 0; i < l.pixels.size(); ++i) {
    l.pixels[i] = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    r.pixels[i] = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  }
  const auto [ol, orr] = infer(m, l, r);
  EXPECT_EQ(ol, l);
  EXPECT_EQ(orr, r);
  testutil::randomize(m, 12, 0.1);
  const auto [a, b] = infer(m, l, r);
  EXPECT_EQ(a.width, 37u);
  EXPECT_EQ(b.height, 21u);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.batch = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.lr = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
