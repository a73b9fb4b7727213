#pragma once

// Confidence-based cross-view fusion. The converted reference features are merged
// with the target features, blended back under the confidence map and re-fused with
// the target through channel attention.

#include <string>
#include <vector>

#include "ptnet/blocks.hpp"

namespace ptnet {

// out = c * fused + (1 - c) * target, with c: N x 1 x H x W broadcast over channels.
Var confidence_blend(Var target, Var fused, Var confidence);

struct Ccfm {
  ConvLayer reduce;      // 1x1, 2C -> C
  Rdb rdb;               // at C
  ChannelAttention ca;   // over the 2C concat of blended and target features
  ConvLayer out_conv;    // 3x3, 2C -> C

  Ccfm() = default;
  Ccfm(const std::string& name, const BlockConfig& cfg);

  // fused = rdb(reduce([target, converted])); blended = confidence_blend(target, fused, c);
  // out = out_conv(ca([blended, target])).
  Var forward(Binder& bind, Var target, Var converted, Var confidence) const;

  void init(Rng& rng);
  void collect(std::vector<Param*>& out);
  std::size_t param_count() const;
  std::size_t macs(std::size_t h, std::size_t w) const;
};

}  // namespace ptnet
