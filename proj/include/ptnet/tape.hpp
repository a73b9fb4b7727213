#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string_view>

#include "ptnet/tensor.hpp"

namespace ptnet {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

// Records operations in execution order and replays their adjoints in exact reverse
// order. A tape belongs to one thread of execution.
class Tape {
 public:
  // Receives the accumulated output gradient and the op's own output value.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out, const Tensor& value_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Appends an op result. The backward function is kept only when some input
  // requires a gradient. Throws NonFiniteError if `value` holds NaN/Inf.
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  const Tensor& value(const Var& v) const { return nodes_.at(v.id).value; }
  bool requires_grad(const Var& v) const { return nodes_.at(v.id).requires_grad; }

  // Zero-initialized gradient accumulator for `v`, or null if `v` needs no gradient.
  Tensor* grad_sink(const Var& v);
  // Accumulated gradient after backward(); null when none reached `v`.
  const Tensor* grad(const Var& v) const;

  // Seeds d(loss)/d(loss) = 1 and runs every recorded adjoint in reverse order.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

  // Non-smooth bookkeeping used by the gradient checker: discrete decisions taken by
  // relu/abs/clamp/argmax are hashed into a signature while tracking is on.
  void set_branch_tracking(bool on) { track_branches_ = on; }
  bool branch_tracking() const { return track_branches_; }
  void note_branch(std::uint64_t bits) {
    signature_ ^= bits + 0x9e3779b97f4a7c15ULL + (signature_ << 6) + (signature_ >> 2);
  }
  std::uint64_t branch_signature() const { return signature_; }

  // Smallest gap between the best and second-best entry over every argmax taken.
  void note_argmax_margin(double m) { argmax_margin_ = m < argmax_margin_ ? m : argmax_margin_; }
  double argmax_margin() const { return argmax_margin_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
  bool track_branches_ = false;
  std::uint64_t signature_ = 0;
  double argmax_margin_ = std::numeric_limits<double>::infinity();
};

inline const Tensor& Var::value() const { return tape->value(*this); }
inline bool Var::requires_grad() const { return tape->requires_grad(*this); }

}  // namespace ptnet
