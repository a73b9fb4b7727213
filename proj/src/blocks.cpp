#include "ptnet/blocks.hpp"

#include <cmath>
#include <stdexcept>

#include "ptnet/ops.hpp"

namespace ptnet {

Var Binder::operator()(const Param& p) {
  auto it = bound_.find(&p);
  if (it != bound_.end()) return it->second;
  Var v = tape_.leaf(p.value, requires_grad_);
  bound_.emplace(&p, v);
  return v;
}

void Binder::accumulate_grads(const std::vector<Param*>& params) const {
  for (Param* p : params) {
    auto it = bound_.find(p);
    if (it == bound_.end()) continue;
    const Tensor* g = tape_.grad(it->second);
    if (!g) continue;
    if (p->grad.shape() != p->value.shape()) p->grad = Tensor(p->value.shape(), 0.0);
    for (std::size_t i = 0; i < g->size(); ++i) p->grad[i] += (*g)[i];
  }
}

void BlockConfig::validate() const {
  if (channels == 0 || growth == 0 || rdb_layers == 0 || ca_reduction == 0)
    throw std::invalid_argument("block config: all sizes must be positive");
  if (channels % 2 != 0) throw std::invalid_argument("block config: channels must be even (SCN split)");
  if (channels % ca_reduction != 0) throw std::invalid_argument("block config: channels must be divisible by ca_reduction");
}

// ---------------------------------------------------------------------------

ConvLayer::ConvLayer(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k)
    : geometry{k, 1, k / 2} {
  if (k != 1 && k != 3) throw std::invalid_argument("ConvLayer " + name + ": kernel must be 1 or 3");
  weight = Param{name + ".weight", Tensor({cout, cin, k, k}), Tensor({cout, cin, k, k})};
  bias = Param{name + ".bias", Tensor({cout}), Tensor({cout})};
}

Var ConvLayer::forward(Binder& bind, Var x) const {
  if (x.shape().size() != 4 || x.shape()[1] != in_channels())
    throw ShapeError(weight.name + ": expected " + std::to_string(in_channels()) + " input channels, got " +
                     shape_str(x.shape()));
  return ops::conv2d(x, bind(weight), bind(bias), geometry);
}

void ConvLayer::init(Rng& rng) {
  const std::size_t fan_in = weight.value.dim(1) * weight.value.dim(2) * weight.value.dim(3);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < weight.value.size(); ++i) weight.value[i] = rng.uniform(-bound, bound);
  bias.value.fill(0.0);
}

void ConvLayer::zero() {
  weight.value.fill(0.0);
  bias.value.fill(0.0);
}

void ConvLayer::collect(std::vector<Param*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

std::size_t ConvLayer::macs(std::size_t h, std::size_t w) const { return weight.value.size() * h * w; }

// ---------------------------------------------------------------------------

Rdb::Rdb(const std::string& name, const BlockConfig& cfg) {
  cfg.validate();
  for (std::size_t i = 0; i < cfg.rdb_layers; ++i)
    dense.emplace_back(name + ".dense" + std::to_string(i), cfg.channels + i * cfg.growth, cfg.growth, 3);
  fusion = ConvLayer(name + ".fusion", cfg.channels + cfg.rdb_layers * cfg.growth, cfg.channels, 1);
}

Var Rdb::forward(Binder& bind, Var x) const {
  std::vector<Var> feats{x};
  for (const auto& layer : dense) {
    const Var in = feats.size() == 1 ? x : ops::concat_channels(feats);
    feats.push_back(ops::relu(layer.forward(bind, in)));
  }
  return ops::add(fusion.forward(bind, ops::concat_channels(feats)), x);
}

void Rdb::init(Rng& rng) {
  for (auto& l : dense) l.init(rng);
  fusion.init(rng);
}

void Rdb::collect(std::vector<Param*>& out) {
  for (auto& l : dense) l.collect(out);
  fusion.collect(out);
}

std::size_t Rdb::param_count() const {
  std::size_t n = fusion.param_count();
  for (const auto& l : dense) n += l.param_count();
  return n;
}

std::size_t Rdb::macs(std::size_t h, std::size_t w) const {
  std::size_t n = fusion.macs(h, w);
  for (const auto& l : dense) n += l.macs(h, w);
  return n;
}

// ---------------------------------------------------------------------------

Scn::Scn(const std::string& name, std::size_t channels) {
  if (channels % 2 != 0) throw std::invalid_argument("Scn " + name + ": channels must be even");
  const std::size_t half = channels / 2;
  gate = ConvLayer(name + ".gate", half, half, 3);
  calibrated = ConvLayer(name + ".calibrated", half, half, 3);
  plain = ConvLayer(name + ".plain", half, half, 3);
}

Var Scn::forward(Binder& bind, Var x) const {
  const std::size_t half = gate.in_channels();
  if (x.shape().size() != 4 || x.shape()[1] != 2 * half)
    throw ShapeError(gate.weight.name + ": channel mismatch " + shape_str(x.shape()));
  const Var x1 = ops::slice_channels(x, 0, half);
  const Var x2 = ops::slice_channels(x, half, half);
  const Var g = ops::sigmoid(ops::upsample_nearest(gate.forward(bind, ops::avg_pool(x1, 2)), 2));
  const Var cal = ops::mul(g, calibrated.forward(bind, x1));
  const Var pl = plain.forward(bind, x2);
  const Var parts[] = {cal, pl};
  return ops::add(ops::concat_channels(parts), x);
}

void Scn::init(Rng& rng) {
  gate.init(rng);
  calibrated.init(rng);
  plain.init(rng);
}

void Scn::collect(std::vector<Param*>& out) {
  gate.collect(out);
  calibrated.collect(out);
  plain.collect(out);
}

std::size_t Scn::param_count() const { return gate.param_count() + calibrated.param_count() + plain.param_count(); }

std::size_t Scn::macs(std::size_t h, std::size_t w) const {
  return gate.macs(h / 2, w / 2) + calibrated.macs(h, w) + plain.macs(h, w);
}

// ---------------------------------------------------------------------------

Msb::Msb(const std::string& name, std::size_t channels) {
  for (std::size_t s : kScales) branches.emplace_back(name + ".scale" + std::to_string(s), channels);
  aggregate = ConvLayer(name + ".aggregate", channels * std::size(kScales), channels, 1);
}

Var Msb::forward(Binder& bind, Var x) const {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[2] % 8 != 0 || s[3] % 8 != 0)
    throw ShapeError("Msb: extents must be divisible by 8 (quarter-scale branch is pooled again by SCN), got " +
                     shape_str(s));
  std::vector<Var> outs;
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const std::size_t f = kScales[b];
    if (f == 1) {
      outs.push_back(branches[b].forward(bind, x));
    } else {
      outs.push_back(ops::upsample_nearest(branches[b].forward(bind, ops::avg_pool(x, f)), f));
    }
  }
  return aggregate.forward(bind, ops::concat_channels(outs));
}

void Msb::init(Rng& rng) {
  for (auto& b : branches) b.init(rng);
  aggregate.init(rng);
}

void Msb::collect(std::vector<Param*>& out) {
  for (auto& b : branches) b.collect(out);
  aggregate.collect(out);
}

std::size_t Msb::param_count() const {
  std::size_t n = aggregate.param_count();
  for (const auto& b : branches) n += b.param_count();
  return n;
}

std::size_t Msb::macs(std::size_t h, std::size_t w) const {
  std::size_t n = aggregate.macs(h, w);
  for (std::size_t b = 0; b < branches.size(); ++b) n += branches[b].macs(h / kScales[b], w / kScales[b]);
  return n;
}

// ---------------------------------------------------------------------------

ChannelAttention::ChannelAttention(const std::string& name, std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels % reduction != 0)
    throw std::invalid_argument("ChannelAttention " + name + ": channels must be divisible by the reduction");
  down = ConvLayer(name + ".down", channels, channels / reduction, 1);
  up = ConvLayer(name + ".up", channels / reduction, channels, 1);
}

Var ChannelAttention::forward(Binder& bind, Var x) const {
  const Var pooled = ops::global_avg_pool(x);
  const Var s = ops::sigmoid(up.forward(bind, ops::relu(down.forward(bind, pooled))));
  return ops::scale_channels(x, s);
}

void ChannelAttention::init(Rng& rng) {
  down.init(rng);
  up.init(rng);
}

void ChannelAttention::collect(std::vector<Param*>& out) {
  down.collect(out);
  up.collect(out);
}

std::size_t ChannelAttention::param_count() const { return down.param_count() + up.param_count(); }

std::size_t ChannelAttention::macs() const { return down.macs(1, 1) + up.macs(1, 1); }

}  // namespace ptnet
