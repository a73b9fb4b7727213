#pragma once

// Symmetric stereo deblocking network: shared feature extraction per view, two
// coarse-to-fine cross-view stages (parallax matching + confidence fusion) and a
// residual reconstruction added to the compressed input.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ptnet/blocks.hpp"
#include "ptnet/ccfm.hpp"
#include "ptnet/parallax.hpp"

namespace ptnet {

struct PTNetConfig {
  BlockConfig block;
  std::size_t fe_rdbs = 4;
  std::size_t stages = 2;
  std::size_t rec_rdbs = 4;
  // One fusion parameter set for all stages instead of one per stage.
  bool share_stages = false;
  parallax::BiptmOptions attention;

  void validate() const;
  // Canonical `key = value` lines; also the input of config_hash().
  std::string describe() const;
};

std::uint64_t config_hash(const PTNetConfig& cfg);

struct StereoVars {
  Var left;
  Var right;
};

// Per-stage matching diagnostics for attention dumps.
struct StageTrace {
  Tensor confidence_l2r;  // 1 x 1 x H x W, target R
  Tensor confidence_r2l;  // target L
  std::vector<std::size_t> indices_l2r;
  std::vector<std::size_t> indices_r2l;
  std::size_t grid_h = 0, grid_w = 0;
};

struct ParamGroup {
  std::string name;
  std::size_t count = 0;
};

class PTNet {
 public:
  explicit PTNet(const PTNetConfig& cfg = {});

  const PTNetConfig& config() const { return cfg_; }

  // Random conv weights from `seed`; the tail stays zero so the network starts as the identity.
  void init(std::uint64_t seed);

  // Inputs: 1 x 1 x H x W each, H and W divisible by 8. Returns I_c + correction per view.
  StereoVars forward(Binder& bind, Var left, Var right, std::vector<StageTrace>* trace = nullptr) const;

  std::vector<Param*> parameters();
  std::vector<const Param*> parameters() const;

  std::size_t param_count() const;
  std::vector<ParamGroup> param_breakdown() const;
  // Multiply-accumulates of one stereo pair at H x W: convolutions of both views plus
  // one relevance product per stage.
  std::uint64_t macs(std::size_t h, std::size_t w) const;

  void zero_grads();

  ConvLayer head;
  Msb msb;
  std::vector<Rdb> fe;
  std::vector<Ccfm> fusion;  // one per stage, or a single shared one
  std::vector<Rdb> rec;
  ConvLayer tail;

 private:
  Var features(Binder& bind, Var image) const;
  Var reconstruct(Binder& bind, Var image, Var feats) const;
  const Ccfm& stage_fusion(std::size_t s) const { return fusion[cfg_.share_stages ? 0 : s]; }

  PTNetConfig cfg_;
};

// Eq.-style L1 objective for one pair: sum |out - target| over both views, or the
// per-pixel mean when `per_pixel` is set.
Var pair_l1(Var out_left, Var out_right, Var target_left, Var target_right, bool per_pixel = false);

// Batch loss: mean over pairs of pair_l1, evaluated from plain tensors.
double loss_l1(const std::vector<std::pair<Tensor, Tensor>>& outputs,
               const std::vector<std::pair<Tensor, Tensor>>& targets, bool per_pixel = false);

// Checkpoint directory: header.txt (config, hash, epoch, seed), manifest.txt (param
// name -> tensor file) and one tensor dump per parameter.
struct CheckpointInfo {
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
};
void save_checkpoint(const std::filesystem::path& dir, const PTNet& model, const CheckpointInfo& info);
PTNet load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

// Applies one model key (channels, growth, rdb_layers, ca_reduction, fe_rdbs, stages,
// rec_rdbs, share_stages, attention, temperature, same_row). False if the key is not a
// model key; throws on a malformed value.
bool apply_model_key(PTNetConfig& cfg, const std::string& key, const std::string& value);
// Parses the `key = value` lines written by PTNetConfig::describe().
PTNetConfig parse_model_config(const std::string& text);

}  // namespace ptnet
