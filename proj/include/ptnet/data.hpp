#pragma once

// Stereo datasets: directory loading, patch extraction, flip augmentation, JPEG
// degradation with one quality factor per pair, and a seeded synthetic stereo generator.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ptnet/image.hpp"
#include "ptnet/rng.hpp"

namespace ptnet::data {

struct StereoPair {
  ImagePlane left;
  ImagePlane right;
  std::string name;
};

struct StereoSample {
  ImagePlane clean_left, clean_right;
  ImagePlane degraded_left, degraded_right;
  int qf = 0;
  std::string source;
};

struct LoadResult {
  std::vector<StereoPair> pairs;      // sorted by name
  std::vector<std::string> skipped;   // files without a partner view
};

// Pairs `<name>_L.png` with `<name>_R.png`. Other files are ignored.
LoadResult load_stereo_dir(const std::filesystem::path& dir);

struct PatchSpec {
  std::size_t height = 64;
  std::size_t width = 160;
  std::size_t stride = 20;
};

std::size_t patch_count(std::size_t height, std::size_t width, const PatchSpec& spec = {});
// Co-located crops of both views in row-major grid order.
std::vector<StereoPair> extract_patches(const StereoPair& pair, const PatchSpec& spec = {});

struct FlipDraws {
  bool vertical = false;
  bool horizontal = false;
};
FlipDraws draw_flips(Rng& rng, double p = 0.5);
// Vertical: flip both views. Horizontal: flip both views and swap them, so the right
// view stays the left one shifted leftwards.
StereoPair apply_flips(const StereoPair& pair, const FlipDraws& d);
StereoPair augment(const StereoPair& pair, Rng& rng, double p = 0.5);

int draw_qf(Rng& rng, int lo = 10, int hi = 30);
// One quality factor drawn uniformly from [lo, hi] and applied to both views.
StereoSample degrade_pair(const StereoPair& pair, Rng& rng, int lo = 10, int hi = 30);
StereoSample degrade_pair(const StereoPair& pair, int qf);

// Rectangle in left-view coordinates; the right view shows it `disparity` px further left.
struct SynthRect {
  std::size_t x = 0, y = 0, width = 0, height = 0;
  std::size_t disparity = 0;
};

// Left-view background hidden behind a shifted rectangle in the right view: [x0, x1) x [y0, y1).
struct Occlusion {
  std::size_t x0 = 0, x1 = 0, y0 = 0, y1 = 0;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t width = 160;
  std::size_t height = 64;
  std::size_t sinusoids = 4;
  double freq_min = 0.02;  // cycles per pixel
  double freq_max = 0.25;
  double noise = 6.0;      // uniform noise amplitude in levels
  std::size_t rect_count = 3;
  std::size_t disparity_min = 4;
  std::size_t disparity_max = 20;
  // When non-empty these rectangles are used instead of random ones.
  std::vector<SynthRect> rects;
};

struct SynthPair {
  StereoPair pair;
  std::vector<SynthRect> rects;
  std::vector<Occlusion> occlusions;
};

SynthPair synth_stereo(const SynthSpec& spec);

// One "name qf" row per sample.
std::string manifest_text(const std::vector<StereoSample>& samples);

}  // namespace ptnet::data
