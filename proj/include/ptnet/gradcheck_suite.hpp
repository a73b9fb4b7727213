#pragma once

// Finite-difference verification of every learned block, the parallax matcher and the
// full network on small random instances.

#include <cstdint>
#include <string>
#include <vector>

#include "ptnet/gradcheck.hpp"

namespace ptnet {

struct SuiteOptions {
  std::uint64_t seed = 7;
  std::size_t height = 16;
  std::size_t width = 32;
  std::size_t channels = 8;
  double eps = 1e-6;
  std::size_t block_coords = 400;  // probed coordinates per block (0: all)
  std::size_t model_coords = 600;  // probed coordinates for the full network
  // Seeds tried (seed, seed+1, ...) until every argmax margin clears the threshold.
  std::size_t max_attempts = 64;
};

struct SuiteEntry {
  std::string name;
  GradCheckResult result;
  std::uint64_t seed = 0;  // seed of the accepted point
  double seconds = 0.0;
};

std::vector<SuiteEntry> gradcheck_blocks(const SuiteOptions& opts = {});
SuiteEntry gradcheck_model(const SuiteOptions& opts = {});

}  // namespace ptnet
