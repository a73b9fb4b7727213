#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ptnet/tape.hpp"

namespace ptnet {

// Scalar-valued function of the leaves placed on a fresh tape.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
  double eps = 1e-6;
  // Probe at most this many coordinates, drawn uniformly without replacement (0 = all).
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  // Required gap between best and runner-up of every argmax at the base point.
  double min_argmax_margin = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +/- eps probes changed a relu/abs/clamp/argmax decision.
  std::size_t skipped_nonsmooth = 0;
  double argmax_margin = 0.0;
  bool margin_ok = true;

  bool passed(double tol) const { return margin_ok && checked > 0 && max_rel_error <= tol; }
};

// Smallest best/runner-up gap over every argmax taken by one evaluation at `point`.
double argmax_margin(const ScalarFn& fn, const std::vector<Tensor>& point);

// Compares reverse-mode gradients with central differences. The error of one coordinate
// is |analytic - fd| / max(1, |analytic|, |fd|); the result holds the maximum.
GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& point, const GradCheckOptions& opts = {});

}  // namespace ptnet
