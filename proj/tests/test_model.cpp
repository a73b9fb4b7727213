#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "model_util.hpp"
#include "ptnet/ops.hpp"

using namespace ptnet;
using testutil::bits_equal;
using testutil::random_tensor;
using testutil::tiny_config;

TEST(Model, FreshModelIsIdentity) {
  PTNet m(tiny_config());
  m.init(1);
  const Tensor l = random_tensor({1, 1, 16, 32}, 2, 0, 1), r = random_tensor({1, 1, 16, 32}, 3, 0, 1);
  const auto [ol, orr] = testutil::run(m, l, r);
  EXPECT_TRUE(bits_equal(ol, l));
  EXPECT_TRUE(bits_equal(orr, r));
}

TEST(Model, SwappedViewsSwapOutputsExactly) {
  for (bool shared : {false, true}) {
    PTNetConfig cfg = tiny_config();
    cfg.share_stages = shared;
    PTNet m(cfg);
    testutil::randomize(m, 4);
    const Tensor l = random_tensor({1, 1, 16, 32}, 5, 0, 1), r = random_tensor({1, 1, 16, 32}, 6, 0, 1);
    const auto a = testutil::run(m, l, r);
    const auto b = testutil::run(m, r, l);
    EXPECT_TRUE(bits_equal(a.first, b.second));
    EXPECT_TRUE(bits_equal(a.second, b.first));
  }
}

TEST(Model, ShapeContract) {
  PTNet m(tiny_config());
  testutil::randomize(m, 7, 0.1);
  const auto [ol, orr] = testutil::run(m, random_tensor({1, 1, 64, 160}, 8, 0, 1), random_tensor({1, 1, 64, 160}, 9, 0, 1));
  EXPECT_EQ(ol.shape(), (Shape{1, 1, 64, 160}));
  EXPECT_EQ(orr.shape(), (Shape{1, 1, 64, 160}));
  for (double v : ol.data()) ASSERT_TRUE(std::isfinite(v));
  EXPECT_THROW(testutil::run(m, Tensor({1, 1, 12, 16}), Tensor({1, 1, 12, 16})), ShapeError);
}

TEST(Model, TraceRecordsEveryStage) {
  PTNet m(tiny_config());
  testutil::randomize(m, 10);
  Tape t;
  Binder bind(t, false);
  std::vector<StageTrace> trace;
  m.forward(bind, t.constant(random_tensor({1, 1, 16, 32}, 11)), t.constant(random_tensor({1, 1, 16, 32}, 12)), &trace);
  ASSERT_EQ(trace.size(), 2u);
  EXPECT_EQ(trace[0].confidence_l2r.shape(), (Shape{1, 1, 16, 32}));
  for (double c : trace[1].confidence_r2l.data()) {
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(Model, ParameterBudgetAndBreakdown) {
  const PTNet paper;
  const double m = static_cast<double>(paper.param_count()) / 1e6;
  EXPECT_GE(m, 0.73);
  EXPECT_LE(m, 1.09);
  std::size_t sum = 0, direct = 0;
  for (const auto& g : paper.param_breakdown()) sum += g.count;
  for (const Param* p : paper.parameters()) direct += p->value.size();
  EXPECT_EQ(sum, paper.param_count());
  EXPECT_EQ(direct, paper.param_count());
  PTNetConfig shared;
  shared.share_stages = true;
  EXPECT_LT(PTNet(shared).param_count(), paper.param_count());
}

TEST(Model, MacCountMatchesLayerSum) {
  const PTNetConfig cfg = tiny_config();
  const PTNet m(cfg);
  // Every conv runs at full resolution except the two pooled MSB branches and each SCN gate.
  std::uint64_t per_view = 0;
  for (const Param* p : m.parameters()) {
    if (p->value.rank() != 4) continue;
    const std::string& n = p->name;
    std::uint64_t div = 1;
    if (n.find("scale2") != std::string::npos) div *= 4;
    if (n.find("scale4") != std::string::npos) div *= 16;
    if (n.find(".gate.") != std::string::npos) div *= 4;
    if (n.find(".ca.") != std::string::npos) {
      per_view += p->value.size();
      continue;
    }
    per_view += p->value.size() * 32 * 64 / div;
  }
  const std::uint64_t relevance = 2 * (8 * 16) * (8 * 16) * 9 * 4;
  EXPECT_EQ(m.macs(32, 64), 2 * per_view + relevance);
}

TEST(Model, ConfigRoundTripAndHash) {
  PTNetConfig c = tiny_config();
  c.attention.mode = parallax::AttentionMode::Soft;
  c.attention.temperature = 0.25;
  const PTNetConfig back = parse_model_config(c.describe());
  EXPECT_EQ(back.describe(), c.describe());
  EXPECT_EQ(config_hash(back), config_hash(c));
  PTNetConfig d = c;
  d.block.growth = 8;
  EXPECT_NE(config_hash(d), config_hash(c));
  EXPECT_FALSE(apply_model_key(c, "lr", "1"));
  EXPECT_THROW(apply_model_key(c, "channels", "four"), std::exception);
}

TEST(Loss, Examples) {
  Tape t;
  const Tensor a = random_tensor({1, 1, 4, 4}, 13);
  EXPECT_EQ(pair_l1(t.constant(a), t.constant(a), t.constant(a), t.constant(a)).value()[0], 0.0);
  const Var one = t.constant(Tensor({1, 1, 1, 1}, 0.5));
  const Var off = t.constant(Tensor({1, 1, 1, 1}, 0.75));
  EXPECT_EQ(pair_l1(one, one, off, off).value()[0], 0.5);
  EXPECT_EQ(loss_l1({{a, a}, {a, Tensor({1, 1, 4, 4}, 0.0)}}, {{a, a}, {a, a}}),
            [&] {
              double s = 0;
              for (double v : a.data()) s += std::abs(v);
              return s / 2.0;
            }());
}

TEST(Loss, GradientIsSignOverBatch) {
  Tape t;
  const Var ol = t.leaf(random_tensor({1, 1, 3, 3}, 14)), orr = t.leaf(random_tensor({1, 1, 3, 3}, 15));
  const Tensor tl = random_tensor({1, 1, 3, 3}, 16), tr = random_tensor({1, 1, 3, 3}, 17);
  const Var loss = ops::scale(pair_l1(ol, orr, t.constant(tl), t.constant(tr)), 1.0 / 4.0);
  EXPECT_GE(loss.value()[0], 0.0);
  t.backward(loss);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ((*t.grad(ol))[i], (ol.value()[i] > tl[i] ? 1.0 : -1.0) / 4.0);
    EXPECT_EQ((*t.grad(orr))[i], (orr.value()[i] > tr[i] ? 1.0 : -1.0) / 4.0);
  }
  const Var pp = pair_l1(ol, orr, t.constant(tl), t.constant(tr), true);
  EXPECT_NEAR(pp.value()[0] * 18.0, pair_l1(ol, orr, t.constant(tl), t.constant(tr)).value()[0], 1e-12);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  PTNet m(tiny_config());
  testutil::randomize(m, 18);
  const auto dir = testutil::scratch_dir("ckpt") / "c";
  save_checkpoint(dir, m, {7, 99});
  CheckpointInfo info;
  const PTNet back = load_checkpoint(dir, &info);
  EXPECT_EQ(info.epoch, 7u);
  EXPECT_EQ(info.seed, 99u);
  EXPECT_EQ(back.config().describe(), m.config().describe());
  const std::vector<Param*> a = m.parameters();
  const std::vector<const Param*> b = back.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_TRUE(bits_equal(a[i]->value, b[i]->value));
  }
}

TEST(Checkpoint, DetectsTampering) {
  PTNet m(tiny_config());
  m.init(19);
  const auto root = testutil::scratch_dir("ckpt_bad");
  save_checkpoint(root / "c", m, {1, 1});
  {
    std::ifstream in(root / "c" / "header.txt");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    const auto pos = text.find("channels = 4");
    ASSERT_NE(pos, std::string::npos);
    text.replace(pos, 12, "channels = 6");
    std::ofstream(root / "c" / "header.txt") << text;
  }
  EXPECT_THROW(load_checkpoint(root / "c"), std::runtime_error);
  save_checkpoint(root / "d", m, {1, 1});
  std::filesystem::remove(root / "d" / "tail.weight.bin");
  EXPECT_THROW(load_checkpoint(root / "d"), std::runtime_error);
  EXPECT_THROW(load_checkpoint(root / "missing"), std::runtime_error);
}
