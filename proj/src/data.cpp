#include "ptnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "ptnet/codec.hpp"

namespace ptnet::data {

LoadResult load_stereo_dir(const std::filesystem::path& dir) {
  std::map<std::string, std::filesystem::path> lefts, rights;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.size() < 3) continue;
    const std::string tag = stem.substr(stem.size() - 2);
    const std::string name = stem.substr(0, stem.size() - 2);
    if (tag == "_L") lefts[name] = entry.path();
    else if (tag == "_R") rights[name] = entry.path();
  }
  LoadResult out;
  for (const auto& [name, lp] : lefts) {
    auto it = rights.find(name);
    if (it == rights.end()) {
      out.skipped.push_back(lp.filename().string());
      continue;
    }
    StereoPair p{read_png(lp), read_png(it->second), name};
    if (p.left.width != p.right.width || p.left.height != p.right.height)
      throw std::runtime_error("stereo pair '" + name + "': view extents differ");
    out.pairs.push_back(std::move(p));
  }
  for (const auto& [name, rp] : rights)
    if (!lefts.count(name)) out.skipped.push_back(rp.filename().string());
  std::sort(out.skipped.begin(), out.skipped.end());
  return out;
}

std::size_t patch_count(std::size_t height, std::size_t width, const PatchSpec& spec) {
  if (spec.stride == 0) throw std::invalid_argument("patch stride must be positive");
  if (height < spec.height || width < spec.width)
    throw std::invalid_argument("image " + std::to_string(width) + "x" + std::to_string(height) +
                                " smaller than patch " + std::to_string(spec.width) + "x" + std::to_string(spec.height));
  return ((height - spec.height) / spec.stride + 1) * ((width - spec.width) / spec.stride + 1);
}

std::vector<StereoPair> extract_patches(const StereoPair& pair, const PatchSpec& spec) {
  const std::size_t h = pair.left.height, w = pair.left.width;
  std::vector<StereoPair> out;
  out.reserve(patch_count(h, w, spec));
  for (std::size_t y = 0; y + spec.height <= h; y += spec.stride)
    for (std::size_t x = 0; x + spec.width <= w; x += spec.stride)
      out.push_back({crop(pair.left, x, y, spec.width, spec.height), crop(pair.right, x, y, spec.width, spec.height),
                     pair.name + "_y" + std::to_string(y) + "_x" + std::to_string(x)});
  return out;
}

FlipDraws draw_flips(Rng& rng, double p) {
  FlipDraws d;
  d.vertical = rng.bernoulli(p);
  d.horizontal = rng.bernoulli(p);
  return d;
}

StereoPair apply_flips(const StereoPair& pair, const FlipDraws& d) {
  StereoPair out = pair;
  if (d.vertical) {
    out.left = flip_vertical(out.left);
    out.right = flip_vertical(out.right);
  }
  if (d.horizontal) {
    ImagePlane l = flip_horizontal(out.right);
    out.right = flip_horizontal(out.left);
    out.left = std::move(l);
  }
  return out;
}

StereoPair augment(const StereoPair& pair, Rng& rng, double p) { return apply_flips(pair, draw_flips(rng, p)); }

int draw_qf(Rng& rng, int lo, int hi) {
  if (lo < 1 || hi > 100 || lo > hi) throw std::invalid_argument("quality factor range must lie within [1, 100]");
  return rng.uniform_int(lo, hi);
}

StereoSample degrade_pair(const StereoPair& pair, int qf) {
  return {pair.left, pair.right, codec::degrade(pair.left, qf), codec::degrade(pair.right, qf), qf, pair.name};
}

StereoSample degrade_pair(const StereoPair& pair, Rng& rng, int lo, int hi) {
  return degrade_pair(pair, draw_qf(rng, lo, hi));
}

namespace {

struct Wave {
  double fx, fy, phase, amp;
};

std::vector<Wave> draw_waves(Rng& rng, const SynthSpec& s, double total_amp) {
  std::vector<Wave> waves(s.sinusoids);
  for (auto& w : waves) {
    const double f = rng.uniform(s.freq_min, s.freq_max);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    w = {f * std::cos(angle), f * std::sin(angle), rng.uniform(0.0, 2 * std::numbers::pi),
         total_amp / static_cast<double>(std::max<std::size_t>(1, s.sinusoids))};
  }
  return waves;
}

double wave_sum(const std::vector<Wave>& waves, double x, double y) {
  double v = 0.0;
  for (const auto& w : waves) v += w.amp * std::sin(2 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
  return v;
}

std::uint8_t to_level(double v) { return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0)); }

}  // namespace

SynthPair synth_stereo(const SynthSpec& spec) {
  if (spec.width == 0 || spec.height == 0) throw std::invalid_argument("synth: empty canvas");
  if (spec.freq_min > spec.freq_max || spec.disparity_min > spec.disparity_max)
    throw std::invalid_argument("synth: inverted range");
  Rng rng(mix_seed(spec.seed));

  ImagePlane bg(spec.width, spec.height);
  const auto waves = draw_waves(rng, spec, 60.0);
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x)
      bg.at(x, y) = to_level(128.0 + wave_sum(waves, double(x), double(y)) + rng.uniform(-spec.noise, spec.noise));

  SynthPair out;
  out.rects = spec.rects;
  if (out.rects.empty()) {
    for (std::size_t i = 0; i < spec.rect_count; ++i) {
      SynthRect r;
      r.disparity = static_cast<std::size_t>(rng.uniform_int(int(spec.disparity_min), int(spec.disparity_max)));
      const std::size_t max_w = spec.width / 3, max_h = spec.height / 2;
      if (max_w < 8 || max_h < 8 || r.disparity + 8 > spec.width) throw std::invalid_argument("synth: canvas too small");
      r.width = static_cast<std::size_t>(rng.uniform_int(8, int(std::min(max_w, spec.width - r.disparity))));
      r.height = static_cast<std::size_t>(rng.uniform_int(8, int(max_h)));
      r.x = static_cast<std::size_t>(rng.uniform_int(int(r.disparity), int(spec.width - r.width)));
      r.y = static_cast<std::size_t>(rng.uniform_int(0, int(spec.height - r.height)));
      out.rects.push_back(r);
    }
  }
  for (const auto& r : out.rects)
    if (r.x < r.disparity || r.x + r.width > spec.width || r.y + r.height > spec.height || r.width == 0 || r.height == 0)
      throw std::invalid_argument("synth: rectangle does not fit the canvas after shifting");

  ImagePlane left = bg, right = bg;
  for (const auto& r : out.rects) {
    const auto tex = draw_waves(rng, spec, 80.0);
    const double base = rng.uniform(60.0, 196.0);
    std::vector<std::uint8_t> patch(r.width * r.height);
    for (std::size_t y = 0; y < r.height; ++y)
      for (std::size_t x = 0; x < r.width; ++x)
        patch[y * r.width + x] = to_level(base + wave_sum(tex, double(x), double(y)) + rng.uniform(-spec.noise, spec.noise));
    for (std::size_t y = 0; y < r.height; ++y)
      for (std::size_t x = 0; x < r.width; ++x) {
        left.at(r.x + x, r.y + y) = patch[y * r.width + x];
        right.at(r.x - r.disparity + x, r.y + y) = patch[y * r.width + x];
      }
    if (r.disparity > 0)
      out.occlusions.push_back({r.x - r.disparity, std::min(r.x, r.x - r.disparity + r.width), r.y, r.y + r.height});
  }
  out.pair = {std::move(left), std::move(right), "synth" + std::to_string(spec.seed)};
  return out;
}

std::string manifest_text(const std::vector<StereoSample>& samples) {
  std::ostringstream os;
  for (const auto& s : samples) os << s.source << " " << s.qf << "\n";
  return os.str();
}

}  // namespace ptnet::data
