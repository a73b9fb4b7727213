#include "ptnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace ptnet {

namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const ScalarFn& fn, const std::vector<Tensor>& point) {
  Tape tape;
  tape.set_branch_tracking(true);
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const auto& t : point) leaves.push_back(tape.leaf(t, false));
  const Var out = fn(tape, leaves);
  if (out.value().size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  return {out.value()[0], tape.branch_signature()};
}

}  // namespace

double argmax_margin(const ScalarFn& fn, const std::vector<Tensor>& point) {
  Tape tape;
  tape.set_branch_tracking(true);
  std::vector<Var> leaves;
  for (const auto& t : point) leaves.push_back(tape.leaf(t, false));
  fn(tape, leaves);
  return tape.argmax_margin();
}

GradCheckResult grad_check(const ScalarFn& fn, const std::vector<Tensor>& point, const GradCheckOptions& opts) {
  if (!(opts.eps >= 1e-8 && opts.eps <= 1e-4)) throw std::invalid_argument("grad_check: eps must lie in [1e-8, 1e-4]");

  GradCheckResult result;
  std::vector<Tensor> analytic;
  std::uint64_t base_signature = 0;
  {
    Tape tape;
    tape.set_branch_tracking(true);
    std::vector<Var> leaves;
    for (const auto& t : point) leaves.push_back(tape.leaf(t, true));
    const Var out = fn(tape, leaves);
    tape.backward(out);
    base_signature = tape.branch_signature();
    result.argmax_margin = tape.argmax_margin();
    result.margin_ok = !(result.argmax_margin < opts.min_argmax_margin);
    for (const auto& leaf : leaves) {
      const Tensor* g = tape.grad(leaf);
      analytic.push_back(g ? *g : Tensor(leaf.shape(), 0.0));
    }
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < point.size(); ++k)
    for (std::size_t i = 0; i < point[k].size(); ++i) coords.emplace_back(k, i);
  if (opts.max_coords != 0 && coords.size() > opts.max_coords) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opts.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  std::vector<Tensor> probe = point;
  for (const auto& [k, i] : coords) {
    const double x0 = point[k][i];
    probe[k][i] = x0 + opts.eps;
    const Probe plus = evaluate(fn, probe);
    probe[k][i] = x0 - opts.eps;
    const Probe minus = evaluate(fn, probe);
    probe[k][i] = x0;
    if (plus.signature != base_signature || minus.signature != base_signature) {
      ++result.skipped_nonsmooth;
      continue;
    }
    const double fd = (plus.value - minus.value) / (2.0 * opts.eps);
    if (!std::isfinite(fd)) throw NonFiniteError("grad_check: non-finite finite-difference probe");
    const double a = analytic[k][i];
    const double err = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
    result.max_rel_error = std::max(result.max_rel_error, err);
    ++result.checked;
  }
  return result;
}

}  // namespace ptnet
