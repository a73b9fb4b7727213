#pragma once

// Learned building blocks: convolution layer, residual dense block (RDB),
// self-calibrated unit (SCN), multi-scale block (MSB) and channel attention (CA).

#include <string>
#include <unordered_map>
#include <vector>

#include "ptnet/kernels.hpp"
#include "ptnet/rng.hpp"
#include "ptnet/tape.hpp"

namespace ptnet {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Places parameters on a tape on first use. Presets let a caller substitute its own
// leaves (the gradient checker does this).
class Binder {
 public:
  explicit Binder(Tape& tape, bool requires_grad = true) : tape_(tape), requires_grad_(requires_grad) {}

  Tape& tape() { return tape_; }
  Var operator()(const Param& p);
  void preset(const Param& p, Var v) { bound_[&p] = v; }
  // p.grad += tape gradient, for every param bound here.
  void accumulate_grads(const std::vector<Param*>& params) const;

 private:
  Tape& tape_;
  bool requires_grad_;
  std::unordered_map<const Param*, Var> bound_;
};

struct BlockConfig {
  std::size_t channels = 32;
  std::size_t growth = 32;
  std::size_t rdb_layers = 4;
  std::size_t ca_reduction = 4;

  void validate() const;
};

struct ConvLayer {
  Param weight;
  Param bias;
  ConvGeometry geometry;

  ConvLayer() = default;
  // Square kernel k (odd), stride 1, same padding.
  ConvLayer(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k);

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }

  Var forward(Binder& bind, Var x) const;
  // Uniform in +-1/sqrt(fan_in), zero bias.
  void init(Rng& rng);
  void zero();
  void collect(std::vector<Param*>& out);
  std::size_t param_count() const { return weight.value.size() + bias.value.size(); }
  // Multiply-accumulates for an H x W output.
  std::size_t macs(std::size_t h, std::size_t w) const;
};

// Dense conv+relu layers over the running concat, 1x1 fusion back to `channels`,
// plus the local residual.
struct Rdb {
  std::vector<ConvLayer> dense;
  ConvLayer fusion;

  Rdb() = default;
  Rdb(const std::string& name, const BlockConfig& cfg);
  Var forward(Binder& bind, Var x) const;
  void init(Rng& rng);
  void collect(std::vector<Param*>& out);
  std::size_t param_count() const;
  std::size_t macs(std::size_t h, std::size_t w) const;
};

// Self-calibrated residual unit. Half the channels pass a pooled sigmoid gate:
// sigmoid(up2(conv(pool2(x1)))) * conv(x1); the other half a plain conv.
struct Scn {
  ConvLayer gate;
  ConvLayer calibrated;
  ConvLayer plain;

  Scn() = default;
  Scn(const std::string& name, std::size_t channels);
  Var forward(Binder& bind, Var x) const;
  void init(Rng& rng);
  void collect(std::vector<Param*>& out);
  std::size_t param_count() const;
  std::size_t macs(std::size_t h, std::size_t w) const;
};

// Scales 1, 1/2, 1/4: average-pool, SCN, nearest upsample; 1x1 aggregation of the concat.
struct Msb {
  std::vector<Scn> branches;
  ConvLayer aggregate;

  static constexpr std::size_t kScales[3] = {1, 2, 4};

  Msb() = default;
  Msb(const std::string& name, std::size_t channels);
  Var forward(Binder& bind, Var x) const;
  void init(Rng& rng);
  void collect(std::vector<Param*>& out);
  std::size_t param_count() const;
  std::size_t macs(std::size_t h, std::size_t w) const;
};

// Squeeze-excitation: global pool, 1x1 down, relu, 1x1 up, sigmoid, per-channel scale.
struct ChannelAttention {
  ConvLayer down;
  ConvLayer up;

  ChannelAttention() = default;
  ChannelAttention(const std::string& name, std::size_t channels, std::size_t reduction);
  Var forward(Binder& bind, Var x) const;
  void init(Rng& rng);
  void collect(std::vector<Param*>& out);
  std::size_t param_count() const;
  std::size_t macs() const;
};

}  // namespace ptnet
