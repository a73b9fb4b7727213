#include "ptnet/ccfm.hpp"

#include "ptnet/ops.hpp"

namespace ptnet {

Var confidence_blend(Var target, Var fused, Var confidence) {
  if (target.shape() != fused.shape())
    throw ShapeError("confidence_blend: " + shape_str(target.shape()) + " vs " + shape_str(fused.shape()));
  return ops::add(ops::scale_spatial(fused, confidence),
                  ops::scale_spatial(target, ops::affine(confidence, -1.0, 1.0)));
}

Ccfm::Ccfm(const std::string& name, const BlockConfig& cfg)
    : reduce(name + ".reduce", 2 * cfg.channels, cfg.channels, 1),
      rdb(name + ".rdb", cfg),
      ca(name + ".ca", 2 * cfg.channels, cfg.ca_reduction),
      out_conv(name + ".out", 2 * cfg.channels, cfg.channels, 3) {}

Var Ccfm::forward(Binder& bind, Var target, Var converted, Var confidence) const {
  if (target.shape() != converted.shape())
    throw ShapeError("ccfm: target " + shape_str(target.shape()) + " vs converted " + shape_str(converted.shape()));
  const Var merged[] = {target, converted};
  const Var fused = rdb.forward(bind, reduce.forward(bind, ops::concat_channels(merged)));
  const Var blended = confidence_blend(target, fused, confidence);
  const Var again[] = {blended, target};
  return out_conv.forward(bind, ca.forward(bind, ops::concat_channels(again)));
}

void Ccfm::init(Rng& rng) {
  reduce.init(rng);
  rdb.init(rng);
  ca.init(rng);
  out_conv.init(rng);
}

void Ccfm::collect(std::vector<Param*>& out) {
  reduce.collect(out);
  rdb.collect(out);
  ca.collect(out);
  out_conv.collect(out);
}

std::size_t Ccfm::param_count() const {
  return reduce.param_count() + rdb.param_count() + ca.param_count() + out_conv.param_count();
}

std::size_t Ccfm::macs(std::size_t h, std::size_t w) const {
  return reduce.macs(h, w) + rdb.macs(h, w) + ca.macs() + out_conv.macs(h, w);
}

}  // namespace ptnet
