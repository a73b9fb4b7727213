#include "ptnet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ptnet/codec.hpp"
#include "ptnet/config.hpp"
#include "ptnet/data.hpp"
#include "ptnet/gradcheck_suite.hpp"
#include "ptnet/metrics.hpp"
#include "ptnet/model.hpp"
#include "ptnet/tensor_io.hpp"
#include "ptnet/train.hpp"

namespace ptnet {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kReferenceParamsM = 0.91;
inline constexpr double kReferenceGFlops = 16.64;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// `--key value` / `--key=value` pairs left over after the declared options.
config::Entries overrides_from(const std::vector<std::string>& extras) {
  config::Entries out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    std::string a = extras[i];
    if (a.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + a + "'");
    a = a.substr(2);
    std::string value;
    if (const auto eq = a.find('='); eq != std::string::npos) {
      value = a.substr(eq + 1);
      a.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("override --" + a + " needs a value");
      value = extras[++i];
    }
    std::replace(a.begin(), a.end(), '-', '_');
    out.emplace_back(a, value);
  }
  return out;
}

void check_precision(const std::string& v) {
  if (v != "double") throw config::ConfigError("precision '" + v + "' is not supported (only double)");
}

void apply_threads(int threads) {
  if (threads < 0) throw UsageError("--threads must be positive");
  if (threads > 0) set_num_threads(threads);
}

template <class F>
void validated(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw config::ConfigError(e.what());
  }
}

void write_text(const fs::path& p, const std::string& s) { write_file_atomic(p, s); }

// ---------------------------------------------------------------------------
// train

struct TrainJob {
  PTNetConfig model;
  TrainConfig train;
  std::string train_dir;
  std::string val_dir;
  std::string out = "train_out";
  std::size_t synth_count = 8;
  std::size_t synth_val_count = 2;
  std::size_t synth_width = 160;
  std::size_t synth_height = 64;
  data::PatchSpec patch;
  int qf_min = 10;
  int qf_max = 30;
  bool augment = true;
  std::string precision = "double";
  int threads = 0;

  TrainJob() { train.batch = 8; }
};

bool apply_train_key(TrainJob& j, const std::string& k, const std::string& v) {
  auto size = [&](std::size_t& f) {
    const long long x = config::to_int(k, v);
    if (x < 0) throw config::ConfigError("config key '" + k + "' must be non-negative");
    f = static_cast<std::size_t>(x);
  };
  if (apply_model_key(j.model, k, v)) return true;
  if (k == "seed") j.train.seed = config::to_u64(k, v);
  else if (k == "precision") { check_precision(v); j.precision = v; }
  else if (k == "out") j.out = v;
  else if (k == "threads") j.threads = static_cast<int>(config::to_int(k, v));
  else if (k == "train_dir") j.train_dir = v;
  else if (k == "val_dir") j.val_dir = v;
  else if (k == "synth_count") size(j.synth_count);
  else if (k == "synth_val_count") size(j.synth_val_count);
  else if (k == "synth_width") size(j.synth_width);
  else if (k == "synth_height") size(j.synth_height);
  else if (k == "patch_height") size(j.patch.height);
  else if (k == "patch_width") size(j.patch.width);
  else if (k == "patch_stride") size(j.patch.stride);
  else if (k == "qf_min") j.qf_min = static_cast<int>(config::to_int(k, v));
  else if (k == "qf_max") j.qf_max = static_cast<int>(config::to_int(k, v));
  else if (k == "augment") j.augment = config::to_bool(k, v);
  else if (k == "epochs") size(j.train.epochs);
  else if (k == "batch") size(j.train.batch);
  else if (k == "max_steps") size(j.train.max_steps);
  else if (k == "lr") j.train.lr = config::to_double(k, v);
  else if (k == "lr_step_epochs") size(j.train.lr_step_epochs);
  else if (k == "lr_gamma") j.train.lr_gamma = config::to_double(k, v);
  else if (k == "lr_floor") j.train.lr_floor = config::to_double(k, v);
  else if (k == "beta1") j.train.beta1 = config::to_double(k, v);
  else if (k == "beta2") j.train.beta2 = config::to_double(k, v);
  else if (k == "adam_eps") j.train.adam_eps = config::to_double(k, v);
  else if (k == "per_pixel_loss") j.train.per_pixel_loss = config::to_bool(k, v);
  else return false;
  return true;
}

std::string describe(const TrainJob& j) {
  std::ostringstream os;
  os << "seed = " << j.train.seed << "\n"
     << "precision = " << j.precision << "\n"
     << "out = " << j.out << "\n"
     << "threads = " << j.threads << "\n"
     << j.model.describe()
     << "train_dir = " << j.train_dir << "\n"
     << "val_dir = " << j.val_dir << "\n"
     << "synth_count = " << j.synth_count << "\n"
     << "synth_val_count = " << j.synth_val_count << "\n"
     << "synth_width = " << j.synth_width << "\n"
     << "synth_height = " << j.synth_height << "\n"
     << "patch_height = " << j.patch.height << "\n"
     << "patch_width = " << j.patch.width << "\n"
     << "patch_stride = " << j.patch.stride << "\n"
     << "qf_min = " << j.qf_min << "\n"
     << "qf_max = " << j.qf_max << "\n"
     << "augment = " << (j.augment ? "true" : "false") << "\n"
     << "epochs = " << j.train.epochs << "\n"
     << "batch = " << j.train.batch << "\n"
     << "max_steps = " << j.train.max_steps << "\n"
     << "lr = " << fmt("%.17g", j.train.lr) << "\n"
     << "lr_step_epochs = " << j.train.lr_step_epochs << "\n"
     << "lr_gamma = " << fmt("%.17g", j.train.lr_gamma) << "\n"
     << "lr_floor = " << fmt("%.17g", j.train.lr_floor) << "\n"
     << "beta1 = " << fmt("%.17g", j.train.beta1) << "\n"
     << "beta2 = " << fmt("%.17g", j.train.beta2) << "\n"
     << "adam_eps = " << fmt("%.17g", j.train.adam_eps) << "\n"
     << "per_pixel_loss = " << (j.train.per_pixel_loss ? "true" : "false") << "\n";
  return os.str();
}

// Clean pairs -> patches -> flips -> JPEG at one drawn quality factor per sample.
std::vector<data::StereoSample> prepare(const std::vector<data::StereoPair>& pairs, const TrainJob& j,
                                        std::uint64_t stream, bool patches) {
  std::vector<data::StereoSample> out;
  std::size_t index = 0;
  for (const auto& p : pairs) {
    const std::vector<data::StereoPair> parts = patches ? data::extract_patches(p, j.patch) : std::vector{p};
    for (const auto& part : parts) {
      Rng rng(mix_seed(j.train.seed ^ stream, index++));
      const data::StereoPair aug = j.augment ? data::augment(part, rng) : part;
      out.push_back(data::degrade_pair(aug, rng, j.qf_min, j.qf_max));
    }
  }
  return out;
}

std::vector<data::StereoPair> synth_pairs(std::size_t count, std::size_t w, std::size_t h, std::uint64_t seed) {
  std::vector<data::StereoPair> out;
  for (std::size_t i = 0; i < count; ++i) {
    data::SynthSpec s;
    s.seed = mix_seed(seed, i);
    s.width = w;
    s.height = h;
    data::StereoPair p = data::synth_stereo(s).pair;
    char name[48];
    std::snprintf(name, sizeof name, "synth%04zu", i);
    p.name = name;
    out.push_back(std::move(p));
  }
  return out;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& extras, int threads, std::ostream& out) {
  TrainJob job;
  config::Entries entries = config_path.empty() ? config::Entries{} : config::parse_file(config_path);
  for (auto& e : overrides_from(extras)) entries.push_back(std::move(e));
  for (const auto& [k, v] : entries)
    if (!apply_train_key(job, k, v)) throw config::ConfigError("unknown config key '" + k + "'");
  if (threads) job.threads = threads;
  apply_threads(job.threads);
  validated([&] {
    job.model.validate();
    job.train.validate();
    if (job.qf_min < 1 || job.qf_max > 100 || job.qf_min > job.qf_max)
      throw std::invalid_argument("quality factors must satisfy 1 <= qf_min <= qf_max <= 100");
  });

  const fs::path dir = job.out;
  fs::create_directories(dir);
  write_text(dir / "config.resolved.txt", describe(job));

  std::vector<data::StereoSample> train_samples, val_samples;
  if (!job.train_dir.empty()) {
    const data::LoadResult lr = data::load_stereo_dir(job.train_dir);
    for (const auto& s : lr.skipped) out << "warning: skipped unpaired file " << s << "\n";
    train_samples = prepare(lr.pairs, job, 0, true);
  } else {
    train_samples = prepare(synth_pairs(job.synth_count, job.synth_width, job.synth_height, job.train.seed), job, 0, false);
  }
  if (!job.val_dir.empty()) {
    val_samples = prepare(data::load_stereo_dir(job.val_dir).pairs, job, 1, false);
  } else if (job.train_dir.empty() && job.synth_val_count > 0) {
    val_samples = prepare(synth_pairs(job.synth_val_count, job.synth_width, job.synth_height, ~job.train.seed), job, 1,
                          false);
  }
  if (train_samples.empty()) throw std::runtime_error("no training samples");
  write_text(dir / "manifest.txt", data::manifest_text(train_samples));

  std::vector<TrainSample> train_set, val_set;
  for (const auto& s : train_samples) train_set.push_back(to_train_sample(s));
  for (const auto& s : val_samples) val_set.push_back(to_train_sample(s));

  PTNet model(job.model);
  model.init(job.train.seed);
  out << "training " << model.param_count() << " parameters on " << train_set.size() << " samples\n";
  const TrainLog log = train(model, train_set, val_set, job.train, [&](const EpochLog& e) {
    out << "epoch " << e.epoch << " lr " << fmt("%.3e", e.lr) << " loss " << fmt("%.6f", e.mean_loss) << " val_psnr "
        << fmt("%.4f", e.val_psnr) << "\n";
    out.flush();
  });
  write_text(dir / "train_log.txt", log.text());
  save_checkpoint(dir / "checkpoint", model, {log.epochs.empty() ? 0 : log.epochs.back().epoch, job.train.seed});
  out << "checkpoint written to " << (dir / "checkpoint").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// info

int cmd_info(const std::string& config_path, const std::string& ckpt, const std::vector<std::string>& extras,
             std::size_t h, std::size_t w, std::ostream& out) {
  PTNetConfig cfg;
  if (!ckpt.empty()) {
    cfg = load_checkpoint(ckpt).config();
  } else {
    config::Entries entries = config_path.empty() ? config::Entries{} : config::parse_file(config_path);
    for (auto& e : overrides_from(extras)) entries.push_back(std::move(e));
    for (const auto& [k, v] : entries) {
      if (k == "precision") check_precision(v);
      else if (k == "seed" || k == "out" || k == "threads") continue;
      else if (!apply_model_key(cfg, k, v)) throw config::ConfigError("unknown config key '" + k + "'");
    }
    validated([&] { cfg.validate(); });
  }
  const PTNet model(cfg);
  PTNetConfig other = cfg;
  other.share_stages = !cfg.share_stages;
  const std::size_t total = model.param_count();
  const std::size_t other_total = PTNet(other).param_count();
  const double m = static_cast<double>(total) / 1e6;
  out << "parameters: " << total << " (" << fmt("%.3f", m) << " M); published reference " << kReferenceParamsM
      << " M; deviation " << fmt("%+.1f", 100.0 * (m / kReferenceParamsM - 1.0)) << "%\n";
  for (const auto& g : model.param_breakdown()) out << "  " << g.name << ": " << g.count << "\n";
  out << "parameters with " << (other.share_stages ? "stage-shared" : "per-stage") << " fusion: " << other_total << " ("
      << fmt("%.3f", static_cast<double>(other_total) / 1e6) << " M)\n";
  const double g = static_cast<double>(model.macs(h, w)) / 1e9;
  out << "multiply-accumulates for a " << w << "x" << h << " stereo pair: " << fmt("%.3f", g) << " G";
  if (h == 100 && w == 100)
    out << "; published reference " << kReferenceGFlops << " G; deviation "
        << fmt("%+.1f", 100.0 * (g / kReferenceGFlops - 1.0)) << "%";
  out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// infer

bool same_dir(const fs::path& a, const fs::path& b) {
  std::error_code ec;
  if (fs::exists(a) && fs::exists(b)) return fs::equivalent(a, b, ec);
  return fs::weakly_canonical(a) == fs::weakly_canonical(b);
}

PTNet with_attention(const PTNet& trained, const std::string& attention) {
  PTNetConfig cfg = trained.config();
  if (!apply_model_key(cfg, "attention", attention)) throw UsageError("bad --attention");
  PTNet m(cfg);
  auto dst = m.parameters();
  const auto src = trained.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
  return m;
}

void dump_attention(const fs::path& dir, const std::string& stem, const std::vector<StageTrace>& trace,
                    std::size_t w, std::size_t h) {
  for (std::size_t s = 0; s < trace.size(); ++s) {
    const std::string prefix = stem + "_stage" + std::to_string(s + 1);
    write_png(dir / (prefix + "_conf_l2r.png"), crop(tensor_to_plane(trace[s].confidence_l2r), 0, 0, w, h));
    write_png(dir / (prefix + "_conf_r2l.png"), crop(tensor_to_plane(trace[s].confidence_r2l), 0, 0, w, h));
  }
}

void infer_pair(const PTNet& model, const fs::path& lpath, const fs::path& rpath, const fs::path& out_dir,
                const std::string& stem, bool dump, std::ostream& out) {
  const ImagePlane l = read_png(lpath), r = read_png(rpath);
  if (l.width != r.width || l.height != r.height)
    throw std::runtime_error("views differ in size: " + lpath.string() + " and " + rpath.string());
  std::vector<StageTrace> trace;
  const auto [ol, orr] = infer(model, l, r, dump ? &trace : nullptr);
  write_png(out_dir / lpath.filename(), ol);
  write_png(out_dir / rpath.filename(), orr);
  if (dump) dump_attention(out_dir, stem, trace, l.width, l.height);
  out << "wrote " << (out_dir / lpath.filename()).string() << " " << (out_dir / rpath.filename()).string() << "\n";
}

int cmd_infer(const std::string& ckpt, const std::vector<std::string>& files, const std::string& in_dir,
              const std::string& out_dir, const std::string& attention, bool dump, std::ostream& out) {
  if (in_dir.empty() == files.empty()) throw UsageError("infer takes LEFT RIGHT images or --dir, not both");
  if (!files.empty() && files.size() != 2) throw UsageError("infer takes exactly two images (LEFT RIGHT)");
  const fs::path dst = out_dir;
  if (!in_dir.empty() && same_dir(in_dir, dst)) throw UsageError("--out must differ from the input directory");
  for (const auto& f : files) {
    const fs::path parent = fs::path(f).has_parent_path() ? fs::path(f).parent_path() : fs::path(".");
    if (same_dir(parent, dst)) throw UsageError("--out must differ from the input directory");
  }
  PTNet loaded = load_checkpoint(ckpt);
  const PTNet model = attention.empty() ? std::move(loaded) : with_attention(loaded, attention);
  fs::create_directories(dst);
  if (!files.empty()) {
    infer_pair(model, files[0], files[1], dst, fs::path(files[0]).stem().string(), dump, out);
    return 0;
  }
  const data::LoadResult lr = data::load_stereo_dir(in_dir);
  for (const auto& s : lr.skipped) out << "warning: skipped unpaired file " << s << "\n";
  if (lr.pairs.empty()) throw std::runtime_error("no stereo pairs in " + in_dir);
  for (const auto& p : lr.pairs) {
    const fs::path base = fs::path(in_dir) / p.name;
    infer_pair(model, base.string() + "_L.png", base.string() + "_R.png", dst, p.name, dump, out);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& ref, const std::string& test, bool csv, std::ostream& out) {
  metrics::DirectoryReport rep;
  if (fs::is_regular_file(ref) && fs::is_regular_file(test)) {
    rep.images.push_back({fs::path(ref).filename().string(), metrics::evaluate(read_png(ref), read_png(test))});
    rep.mean = rep.images[0].report;
  } else if (fs::is_directory(ref) && fs::is_directory(test)) {
    rep = metrics::evaluate_directory(ref, test);
    if (rep.images.empty()) throw std::runtime_error("no PNG files in " + ref);
  } else {
    throw UsageError("--ref and --test must both be PNG files or both directories");
  }

  auto line = [&](const std::string& name, const metrics::QualityReport& r) {
    if (csv)
      out << name << "," << fmt("%.4f", r.psnr) << "," << fmt("%.6f", r.ssim) << "," << fmt("%.4f", r.psnr_b) << "\n";
    else
      out << name << "  " << r.cell() << "\n";
  };
  if (csv) out << "name,psnr,ssim,psnr_b\n";
  else out << "image  PSNR/SSIM/PSNR-B\n";
  for (const auto& r : rep.images) line(r.name, r.report);
  line("mean", rep.mean);
  if (rep.pairs > 0) {
    line("mean_left", rep.left_mean);
    line("mean_pair", rep.pair_mean);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

inline constexpr double kGradTolerance = 1e-4;

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw UsageError("--size must look like HxW");
  const long long h = config::to_int("size", s.substr(0, x));
  const long long w = config::to_int("size", s.substr(x + 1));
  if (h <= 0 || w <= 0 || h % 8 != 0 || w % 8 != 0) throw UsageError("--size extents must be positive multiples of 8");
  return {static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
}

int cmd_gradcheck(const std::string& size, std::uint64_t seed, std::size_t channels, std::size_t coords,
                  bool blocks_only, std::ostream& out) {
  SuiteOptions opts;
  std::tie(opts.height, opts.width) = parse_size(size);
  opts.seed = seed;
  opts.channels = channels;
  if (coords > 0) opts.block_coords = opts.model_coords = coords;
  std::vector<SuiteEntry> entries = gradcheck_blocks(opts);
  if (!blocks_only) entries.push_back(gradcheck_model(opts));
  bool ok = true;
  for (const auto& e : entries) {
    const bool pass = e.result.passed(kGradTolerance);
    ok = ok && pass;
    out << (pass ? "ok   " : "FAIL ") << e.name << "  max_rel_error " << fmt("%.3e", e.result.max_rel_error)
        << "  checked " << e.result.checked << "  skipped_nonsmooth " << e.result.skipped_nonsmooth << "  margin "
        << fmt("%.3e", e.result.argmax_margin) << "  seed " << e.seed << "  " << fmt("%.1f", e.seconds) << "s\n";
  }
  out << (ok ? "all gradients within " : "gradient check failed; tolerance ") << fmt("%.0e", kGradTolerance) << "\n";
  return ok ? 0 : 2;
}

// ---------------------------------------------------------------------------
// synth / degrade

int cmd_synth(std::uint64_t seed, std::size_t count, const std::string& out_dir, std::size_t w, std::size_t h,
              int qf_min, int qf_max, std::ostream& out) {
  if (count == 0) throw UsageError("--count must be positive");
  if (qf_min < 1 || qf_max > 100 || qf_min > qf_max) throw UsageError("quality factors must satisfy 1 <= min <= max <= 100");
  const fs::path dir = out_dir;
  std::vector<data::StereoSample> samples;
  for (std::size_t i = 0; i < count; ++i) {
    data::SynthSpec spec;
    spec.seed = mix_seed(seed, i);
    spec.width = w;
    spec.height = h;
    data::StereoPair p = data::synth_stereo(spec).pair;
    char name[48];
    std::snprintf(name, sizeof name, "synth%04zu", i);
    p.name = name;
    Rng rng(mix_seed(seed ^ 0x5eedULL, i));
    data::StereoSample s = data::degrade_pair(p, rng, qf_min, qf_max);
    write_png(dir / "clean" / (p.name + "_L.png"), s.clean_left);
    write_png(dir / "clean" / (p.name + "_R.png"), s.clean_right);
    write_png(dir / "degraded" / (p.name + "_L.png"), s.degraded_left);
    write_png(dir / "degraded" / (p.name + "_R.png"), s.degraded_right);
    samples.push_back(std::move(s));
  }
  write_text(dir / "manifest.txt", data::manifest_text(samples));
  std::ostringstream cfg;
  cfg << "seed = " << seed << "\ncount = " << count << "\nwidth = " << w << "\nheight = " << h
      << "\nqf_min = " << qf_min << "\nqf_max = " << qf_max << "\n";
  write_text(dir / "config.resolved.txt", cfg.str());
  out << "wrote " << count << " pairs to " << dir.string() << "\n";
  return 0;
}

int cmd_degrade(int qf, const std::string& in, const std::string& dst, std::ostream& out) {
  if (qf < 1 || qf > 100) throw UsageError("--qf must be in [1, 100]");
  write_png(dst, codec::degrade(read_png(in), qf));
  out << "wrote " << dst << " (qf " << qf << ")\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stereo JPEG artifact removal: training, inference and evaluation", "ptnet"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);

  auto* degrade = app.add_subcommand("degrade", "JPEG round trip of one grayscale PNG");
  int qf = 10;
  std::string deg_in, deg_out;
  degrade->add_option("--qf", qf, "quality factor 1..100")->required();
  degrade->add_option("input", deg_in)->required();
  degrade->add_option("output", deg_out)->required();

  auto* synth = app.add_subcommand("synth", "write synthetic stereo pairs with JPEG-degraded copies");
  std::uint64_t synth_seed = 0;
  std::size_t synth_count = 4, synth_w = 160, synth_h = 64;
  int qf_min = 10, qf_max = 30;
  std::string synth_out;
  synth->add_option("--seed", synth_seed);
  synth->add_option("--count", synth_count);
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--width", synth_w);
  synth->add_option("--height", synth_h);
  synth->add_option("--qf-min", qf_min);
  synth->add_option("--qf-max", qf_max);

  auto* trainc = app.add_subcommand("train", "train a model; any config key can be overridden with --key value");
  std::string train_cfg;
  trainc->add_option("--config", train_cfg, "key = value file")->check(CLI::ExistingFile);
  trainc->allow_extras();

  auto* inferc = app.add_subcommand("infer", "restore a stereo pair or a directory of pairs");
  std::string ckpt, in_dir, infer_out, attention;
  std::vector<std::string> files;
  bool dump = false;
  inferc->add_option("--ckpt", ckpt, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  inferc->add_option("images", files, "LEFT RIGHT");
  inferc->add_option("--dir", in_dir, "directory of <name>_L.png/<name>_R.png pairs")->check(CLI::ExistingDirectory);
  inferc->add_option("--out", infer_out)->required();
  inferc->add_option("--attention", attention, "override the checkpoint attention mode")
      ->check(CLI::IsMember({"hard", "soft"}));
  inferc->add_flag("--dump-attention", dump, "also write per-stage confidence maps");

  auto* evalc = app.add_subcommand("eval", "PSNR/SSIM/PSNR-B of test images against references");
  std::string ref, test;
  bool csv = false;
  evalc->add_option("--ref", ref)->required()->check(CLI::ExistingPath);
  evalc->add_option("--test", test)->required()->check(CLI::ExistingPath);
  evalc->add_flag("--csv", csv);

  auto* gradc = app.add_subcommand("gradcheck", "finite-difference check of every block and the full network");
  std::string gsize = "16x32";
  std::uint64_t gseed = 7;
  std::size_t gchannels = 8, gcoords = 0;
  bool blocks_only = false;
  gradc->add_option("--size", gsize, "HxW");
  gradc->add_option("--seed", gseed);
  gradc->add_option("--channels", gchannels)->check(CLI::PositiveNumber);
  gradc->add_option("--coords", gcoords, "probed coordinates per check (0: defaults)");
  gradc->add_flag("--blocks-only", blocks_only);

  auto* infoc = app.add_subcommand("info", "parameter and multiply-accumulate counts");
  std::string info_cfg, info_ckpt;
  std::size_t info_h = 100, info_w = 100;
  infoc->add_option("--config", info_cfg)->check(CLI::ExistingFile);
  infoc->add_option("--ckpt", info_ckpt)->check(CLI::ExistingDirectory);
  infoc->add_option("--height", info_h);
  infoc->add_option("--width", info_w);
  infoc->allow_extras();

  for (CLI::App* sub : app.get_subcommands({}))
    sub->add_option("--threads", threads, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    apply_threads(threads);
    if (*degrade) return cmd_degrade(qf, deg_in, deg_out, out);
    if (*synth) return cmd_synth(synth_seed, synth_count, synth_out, synth_w, synth_h, qf_min, qf_max, out);
    if (*trainc) return cmd_train(train_cfg, trainc->remaining(), threads, out);
    if (*inferc) return cmd_infer(ckpt, files, in_dir, infer_out, attention, dump, out);
    if (*evalc) return cmd_eval(ref, test, csv, out);
    if (*gradc) return cmd_gradcheck(gsize, gseed, gchannels, gcoords, blocks_only, out);
    if (*infoc) {
      if (!info_cfg.empty() && !info_ckpt.empty()) throw UsageError("info takes --config or --ckpt, not both");
      return cmd_info(info_cfg, info_ckpt, infoc->remaining(), info_h, info_w, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const config::ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace ptnet
