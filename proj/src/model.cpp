#include "ptnet/model.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "ptnet/config.hpp"
#include "ptnet/ops.hpp"
#include "ptnet/tensor_io.hpp"

namespace ptnet {

void PTNetConfig::validate() const {
  block.validate();
  if (stages == 0) throw std::invalid_argument("model config: stages must be positive");
  if (!(attention.temperature > 0.0)) throw std::invalid_argument("model config: temperature must be positive");
}

std::string PTNetConfig::describe() const {
  char temp[64];
  std::snprintf(temp, sizeof temp, "%.17g", attention.temperature);
  std::ostringstream os;
  os << "channels = " << block.channels << "\n"
     << "growth = " << block.growth << "\n"
     << "rdb_layers = " << block.rdb_layers << "\n"
     << "ca_reduction = " << block.ca_reduction << "\n"
     << "fe_rdbs = " << fe_rdbs << "\n"
     << "stages = " << stages << "\n"
     << "rec_rdbs = " << rec_rdbs << "\n"
     << "share_stages = " << (share_stages ? "true" : "false") << "\n"
     << "attention = " << (attention.mode == parallax::AttentionMode::Hard ? "hard" : "soft") << "\n"
     << "temperature = " << temp << "\n"
     << "same_row = " << (attention.same_row ? "true" : "false") << "\n";
  return os.str();
}

std::uint64_t config_hash(const PTNetConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : cfg.describe()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool apply_model_key(PTNetConfig& cfg, const std::string& key, const std::string& value) {
  auto size = [&](std::size_t& field) {
    const long long v = config::to_int(key, value);
    if (v < 0) throw config::ConfigError("config key '" + key + "' must be non-negative");
    field = static_cast<std::size_t>(v);
  };
  if (key == "channels") size(cfg.block.channels);
  else if (key == "growth") size(cfg.block.growth);
  else if (key == "rdb_layers") size(cfg.block.rdb_layers);
  else if (key == "ca_reduction") size(cfg.block.ca_reduction);
  else if (key == "fe_rdbs") size(cfg.fe_rdbs);
  else if (key == "stages") size(cfg.stages);
  else if (key == "rec_rdbs") size(cfg.rec_rdbs);
  else if (key == "share_stages") cfg.share_stages = config::to_bool(key, value);
  else if (key == "temperature") cfg.attention.temperature = config::to_double(key, value);
  else if (key == "same_row") cfg.attention.same_row = config::to_bool(key, value);
  else if (key == "attention") {
    if (value == "hard") cfg.attention.mode = parallax::AttentionMode::Hard;
    else if (value == "soft") cfg.attention.mode = parallax::AttentionMode::Soft;
    else throw config::ConfigError("config key 'attention': expected hard or soft, got '" + value + "'");
  } else {
    return false;
  }
  return true;
}

PTNetConfig parse_model_config(const std::string& text) {
  PTNetConfig cfg;
  for (const auto& [k, v] : config::parse(text))
    if (!apply_model_key(cfg, k, v)) throw config::ConfigError("unknown model config key '" + k + "'");
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------

PTNet::PTNet(const PTNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const BlockConfig& b = cfg_.block;
  head = ConvLayer("head", 1, b.channels, 3);
  msb = Msb("fe.msb", b.channels);
  for (std::size_t i = 0; i < cfg_.fe_rdbs; ++i) fe.emplace_back("fe.rdb" + std::to_string(i), b);
  const std::size_t n_fusion = cfg_.share_stages ? 1 : cfg_.stages;
  for (std::size_t s = 0; s < n_fusion; ++s) fusion.emplace_back("stage" + std::to_string(s) + ".ccfm", b);
  for (std::size_t i = 0; i < cfg_.rec_rdbs; ++i) rec.emplace_back("rec.rdb" + std::to_string(i), b);
  tail = ConvLayer("tail", b.channels, 1, 3);
}

void PTNet::init(std::uint64_t seed) {
  Rng rng(mix_seed(seed));
  head.init(rng);
  msb.init(rng);
  for (auto& r : fe) r.init(rng);
  for (auto& f : fusion) f.init(rng);
  for (auto& r : rec) r.init(rng);
  tail.zero();
}

Var PTNet::features(Binder& bind, Var image) const {
  Var x = msb.forward(bind, head.forward(bind, image));
  for (const auto& r : fe) x = r.forward(bind, x);
  return x;
}

Var PTNet::reconstruct(Binder& bind, Var image, Var feats) const {
  Var x = feats;
  for (const auto& r : rec) x = r.forward(bind, x);
  return ops::add(image, tail.forward(bind, x));
}

StereoVars PTNet::forward(Binder& bind, Var left, Var right, std::vector<StageTrace>* trace) const {
  const Shape& s = left.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != 1)
    throw ShapeError("PTNet: expected 1x1xHxW inputs, got " + shape_str(s));
  if (right.shape() != s)
    throw ShapeError("PTNet: view shapes differ " + shape_str(s) + " vs " + shape_str(right.shape()));
  if (s[2] % 8 != 0 || s[3] % 8 != 0) throw ShapeError("PTNet: extents must be divisible by 8, got " + shape_str(s));

  Var fl = features(bind, left);
  Var fr = features(bind, right);
  for (std::size_t st = 0; st < cfg_.stages; ++st) {
    const parallax::BiptmOutput m = parallax::biptm_forward(fl, fr, cfg_.attention);
    const Ccfm& f = stage_fusion(st);
    const Var next_r = f.forward(bind, fr, m.left_to_right.features, m.left_to_right.confidence);
    const Var next_l = f.forward(bind, fl, m.right_to_left.features, m.right_to_left.confidence);
    if (trace) {
      trace->push_back({m.left_to_right.confidence.value(), m.right_to_left.confidence.value(),
                        m.left_to_right.indices, m.right_to_left.indices, m.grid_h, m.grid_w});
    }
    fl = next_l;
    fr = next_r;
  }
  return {reconstruct(bind, left, fl), reconstruct(bind, right, fr)};
}

std::vector<Param*> PTNet::parameters() {
  std::vector<Param*> out;
  head.collect(out);
  msb.collect(out);
  for (auto& r : fe) r.collect(out);
  for (auto& f : fusion) f.collect(out);
  for (auto& r : rec) r.collect(out);
  tail.collect(out);
  return out;
}

std::vector<const Param*> PTNet::parameters() const {
  auto mut = const_cast<PTNet*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<ParamGroup> PTNet::param_breakdown() const {
  std::vector<ParamGroup> g;
  g.push_back({"head conv", head.param_count()});
  g.push_back({"MSB", msb.param_count()});
  std::size_t n = 0;
  for (const auto& r : fe) n += r.param_count();
  g.push_back({"feature RDBs", n});
  for (std::size_t s = 0; s < fusion.size(); ++s)
    g.push_back({cfg_.share_stages ? "CCFM (shared)" : "CCFM stage " + std::to_string(s + 1), fusion[s].param_count()});
  n = 0;
  for (const auto& r : rec) n += r.param_count();
  g.push_back({"reconstruction RDBs", n});
  g.push_back({"tail conv", tail.param_count()});
  return g;
}

std::size_t PTNet::param_count() const {
  std::size_t n = 0;
  for (const auto& g : param_breakdown()) n += g.count;
  return n;
}

std::uint64_t PTNet::macs(std::size_t h, std::size_t w) const {
  std::uint64_t per_view = head.macs(h, w) + msb.macs(h, w) + tail.macs(h, w);
  for (const auto& r : fe) per_view += r.macs(h, w);
  for (const auto& r : rec) per_view += r.macs(h, w);
  for (std::size_t s = 0; s < cfg_.stages; ++s) per_view += stage_fusion(s).macs(h, w);
  const std::uint64_t l = static_cast<std::uint64_t>(h / parallax::kDownsample) * (w / parallax::kDownsample);
  const std::uint64_t d = cfg_.block.channels * 9;
  return 2 * per_view + cfg_.stages * l * l * d;
}

void PTNet::zero_grads() {
  for (Param* p : parameters()) p->grad = Tensor(p->value.shape(), 0.0);
}

// ---------------------------------------------------------------------------

Var pair_l1(Var out_left, Var out_right, Var target_left, Var target_right, bool per_pixel) {
  if (out_left.shape() != target_left.shape() || out_right.shape() != target_right.shape())
    throw ShapeError("loss_l1: output/target shapes differ");
  const Var total = ops::add(ops::sum(ops::abs(ops::sub(out_left, target_left))),
                             ops::sum(ops::abs(ops::sub(out_right, target_right))));
  if (!per_pixel) return total;
  return ops::scale(total, 1.0 / static_cast<double>(out_left.value().size() + out_right.value().size()));
}

double loss_l1(const std::vector<std::pair<Tensor, Tensor>>& outputs,
               const std::vector<std::pair<Tensor, Tensor>>& targets, bool per_pixel) {
  if (outputs.size() != targets.size() || outputs.empty())
    throw ShapeError("loss_l1: need equally many (non-zero) outputs and targets");
  double acc = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    Tape t;
    const Var v = pair_l1(t.constant(outputs[i].first), t.constant(outputs[i].second), t.constant(targets[i].first),
                          t.constant(targets[i].second), per_pixel);
    acc += v.value()[0];
  }
  return acc / static_cast<double>(outputs.size());
}

// ---------------------------------------------------------------------------

namespace {

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const PTNet& model, const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (const Param* p : model.parameters()) {
    const std::string file = p->name + ".bin";
    save_tensor(dir / file, p->value);
    manifest << p->name << " " << file << "\n";
  }
  write_file_atomic(dir / "manifest.txt", manifest.str());
  std::ostringstream header;
  header << "format = ptnet-checkpoint-1\n"
         << "config_hash = " << hex64(config_hash(model.config())) << "\n"
         << "epoch = " << info.epoch << "\n"
         << "seed = " << info.seed << "\n"
         << model.config().describe();
  write_file_atomic(dir / "header.txt", header.str());
}

PTNet load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info) {
  PTNetConfig cfg;
  CheckpointInfo ci;
  std::string hash;
  for (const auto& [k, v] : config::parse(read_text(dir / "header.txt"))) {
    if (k == "format") {
      if (v != "ptnet-checkpoint-1") throw std::runtime_error("checkpoint: unsupported format '" + v + "'");
    } else if (k == "config_hash") {
      hash = v;
    } else if (k == "epoch") {
      ci.epoch = config::to_u64(k, v);
    } else if (k == "seed") {
      ci.seed = config::to_u64(k, v);
    } else if (!apply_model_key(cfg, k, v)) {
      throw std::runtime_error("checkpoint header: unknown key '" + k + "'");
    }
  }
  if (hash != hex64(config_hash(cfg))) throw std::runtime_error("checkpoint: config hash mismatch in " + dir.string());

  PTNet model(cfg);
  std::map<std::string, Param*> by_name;
  for (Param* p : model.parameters()) by_name[p->name] = p;
  std::set<std::string> loaded;
  std::istringstream manifest(read_text(dir / "manifest.txt"));
  std::string name, file;
  while (manifest >> name >> file) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: unexpected parameter '" + name + "'");
    Tensor t = load_tensor(dir / file);
    if (t.shape() != it->second->value.shape())
      throw ShapeError("checkpoint: parameter '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
                       shape_str(it->second->value.shape()));
    it->second->value = std::move(t);
    loaded.insert(name);
  }
  if (loaded.size() != by_name.size())
    throw std::runtime_error("checkpoint: manifest covers " + std::to_string(loaded.size()) + " of " +
                             std::to_string(by_name.size()) + " parameters");
  if (info) *info = ci;
  return model;
}

}  // namespace ptnet
