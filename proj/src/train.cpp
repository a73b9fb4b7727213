#include "ptnet/train.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "ptnet/metrics.hpp"

namespace ptnet {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !(lr_floor >= 0.0) || !(lr_gamma > 0.0 && lr_gamma <= 1.0))
    throw std::invalid_argument("train config: lr must be non-negative and gamma in (0, 1]");
  if (lr_step_epochs == 0 || batch == 0) throw std::invalid_argument("train config: lr_step_epochs and batch must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0))
    throw std::invalid_argument("train config: invalid Adam constants");
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch == 0) throw std::invalid_argument("epochs are 1-based");
  const std::size_t drops = (epoch - 1) / cfg.lr_step_epochs;
  double lr = cfg.lr;
  for (std::size_t i = 0; i < drops; ++i) lr *= cfg.lr_gamma;
  return std::min(cfg.lr, std::max(lr, cfg.lr_floor));
}

void Adam::step(const std::vector<Param*>& params, double lr) {
  if (m_.empty()) {
    for (const Param* p : params) {
      m_.emplace_back(p->value.shape(), 0.0);
      v_.emplace_back(p->value.shape(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw std::logic_error("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    if (p.grad.shape() != p.value.shape()) continue;
    double* w = p.value.ptr();
    const double* g = p.grad.ptr();
    double* m = m_[k].ptr();
    double* v = v_[k].ptr();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      w[i] -= update;
    }
  }
}

TrainSample to_train_sample(const data::StereoSample& s) {
  return {plane_to_tensor(s.degraded_left), plane_to_tensor(s.degraded_right), plane_to_tensor(s.clean_left),
          plane_to_tensor(s.clean_right)};
}

double train_step(PTNet& model, Adam& opt, const std::vector<const TrainSample*>& batch, double lr, bool per_pixel) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const auto params = model.parameters();
  model.zero_grads();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const TrainSample* s : batch) {
    Tape tape;
    Binder bind(tape, true);
    double value = 0.0;
    try {
      const StereoVars out = model.forward(bind, tape.constant(s->input_left), tape.constant(s->input_right));
      const Var loss = pair_l1(out.left, out.right, tape.constant(s->target_left), tape.constant(s->target_right),
                               per_pixel);
      value = loss.value()[0];
      tape.backward(loss);
    } catch (const NonFiniteError& e) {
      throw DivergenceError(std::string("training diverged: ") + e.what());
    }
    if (!std::isfinite(value)) throw DivergenceError("training diverged: non-finite loss");
    bind.accumulate_grads(params);
    total += value;
  }
  for (Param* p : params)
    for (std::size_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= inv;
  opt.step(params, lr);
  return total * inv;
}

double evaluate_loss(const PTNet& model, const std::vector<TrainSample>& samples, bool per_pixel) {
  if (samples.empty()) throw std::invalid_argument("evaluate_loss: no samples");
  double acc = 0.0;
  for (const auto& s : samples) {
    Tape tape;
    Binder bind(tape, false);
    const StereoVars out = model.forward(bind, tape.constant(s.input_left), tape.constant(s.input_right));
    acc += pair_l1(out.left, out.right, tape.constant(s.target_left), tape.constant(s.target_right), per_pixel)
               .value()[0];
  }
  return acc / static_cast<double>(samples.size());
}

double evaluate_psnr(const PTNet& model, const std::vector<TrainSample>& samples) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (const auto& s : samples) {
    const auto [l, r] = infer(model, s.input_left, s.input_right);
    acc += metrics::capped(metrics::psnr(tensor_to_plane(s.target_left), tensor_to_plane(l)));
    acc += metrics::capped(metrics::psnr(tensor_to_plane(s.target_right), tensor_to_plane(r)));
  }
  return acc / static_cast<double>(2 * samples.size());
}

std::string TrainLog::text() const {
  std::ostringstream os;
  char line[160];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "epoch %zu lr %.3e loss %.10g val_psnr %.4f steps %zu\n", e.epoch, e.lr,
                  e.mean_loss, e.val_psnr, e.steps);
    os << line;
  }
  return os.str();
}

TrainLog train(PTNet& model, const std::vector<TrainSample>& train_set, const std::vector<TrainSample>& val_set,
               const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
  Adam opt(cfg.beta1, cfg.beta2, cfg.adam_eps);
  TrainLog log;
  std::vector<std::size_t> order(train_set.size());
  std::size_t steps = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.max_steps && steps >= cfg.max_steps) break;
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, int(i - 1))]);
    const double lr = lr_at_epoch(cfg, epoch);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
      if (cfg.max_steps && steps >= cfg.max_steps) break;
      std::vector<const TrainSample*> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + cfg.batch); ++k) batch.push_back(&train_set[order[k]]);
      const double loss = train_step(model, opt, batch, lr, cfg.per_pixel_loss);
      log.step_losses.push_back(loss);
      sum += loss;
      ++batches;
      ++steps;
    }
    EpochLog e{epoch, lr, sum / static_cast<double>(batches), evaluate_psnr(model, val_set), steps};
    log.epochs.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return log;
}

namespace {

Tensor pad_tensor(const Tensor& t, std::size_t h, std::size_t w) {
  const std::size_t th = t.dim(2), tw = t.dim(3);
  Tensor out({1, 1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out[y * w + x] = t[std::min(y, th - 1) * tw + std::min(x, tw - 1)];
  return out;
}

Tensor crop_tensor(const Tensor& t, std::size_t h, std::size_t w) {
  const std::size_t tw = t.dim(3);
  Tensor out({1, 1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out[y * w + x] = t[y * tw + x];
  return out;
}

std::size_t round_up8(std::size_t v) { return (v + 7) / 8 * 8; }

}  // namespace

std::pair<Tensor, Tensor> infer(const PTNet& model, const Tensor& left, const Tensor& right,
                                std::vector<StageTrace>* trace) {
  if (left.rank() != 4 || left.dim(0) != 1 || left.dim(1) != 1 || left.shape() != right.shape())
    throw ShapeError("infer: expected two 1x1xHxW tensors of equal shape");
  const std::size_t h = left.dim(2), w = left.dim(3);
  const std::size_t ph = round_up8(h), pw = round_up8(w);
  const bool padded = ph != h || pw != w;
  Tape tape;
  Binder bind(tape, false);
  const StereoVars out = model.forward(bind, tape.constant(padded ? pad_tensor(left, ph, pw) : left),
                                       tape.constant(padded ? pad_tensor(right, ph, pw) : right), trace);
  if (!padded) return {out.left.value(), out.right.value()};
  return {crop_tensor(out.left.value(), h, w), crop_tensor(out.right.value(), h, w)};
}

std::pair<ImagePlane, ImagePlane> infer(const PTNet& model, const ImagePlane& left, const ImagePlane& right,
                                        std::vector<StageTrace>* trace) {
  const auto [l, r] = infer(model, plane_to_tensor(left), plane_to_tensor(right), trace);
  return {tensor_to_plane(l), tensor_to_plane(r)};
}

}  // namespace ptnet
