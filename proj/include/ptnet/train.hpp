#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ptnet/data.hpp"
#include "ptnet/model.hpp"

namespace ptnet {

struct TrainConfig {
  double lr = 2e-4;
  std::size_t lr_step_epochs = 20;  // multiply by lr_gamma every this many epochs
  double lr_gamma = 0.1;
  double lr_floor = 2e-6;
  std::size_t epochs = 60;
  std::size_t batch = 8;
  std::size_t max_steps = 0;  // stop after this many optimizer steps (0: no limit)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool per_pixel_loss = false;
  std::uint64_t seed = 0;

  void validate() const;
};

// Learning rate of a 1-based epoch.
double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

class Adam {
 public:
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const std::vector<Param*>& params, double lr);
  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

struct TrainSample {
  Tensor input_left, input_right;    // degraded, 1 x 1 x H x W in [0, 1]
  Tensor target_left, target_right;  // clean
};
TrainSample to_train_sample(const data::StereoSample& s);

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One optimizer step over `batch`; returns the batch-mean pair loss before the update.
double train_step(PTNet& model, Adam& opt, const std::vector<const TrainSample*>& batch, double lr,
                  bool per_pixel = false);

// Batch-mean loss without updating anything.
double evaluate_loss(const PTNet& model, const std::vector<TrainSample>& samples, bool per_pixel = false);
// Mean PSNR over both views of the 8-bit rounded outputs against the clean targets.
double evaluate_psnr(const PTNet& model, const std::vector<TrainSample>& samples);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double val_psnr = 0.0;  // NaN without validation data
  std::size_t steps = 0;  // optimizer steps so far
};

struct TrainLog {
  std::vector<double> step_losses;
  std::vector<EpochLog> epochs;
  std::string text() const;
};

TrainLog train(PTNet& model, const std::vector<TrainSample>& train_set, const std::vector<TrainSample>& val_set,
               const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

// No-grad inference on arbitrary extents: edge-replicating pad to multiples of 8,
// forward, crop.
std::pair<Tensor, Tensor> infer(const PTNet& model, const Tensor& left, const Tensor& right,
                                std::vector<StageTrace>* trace = nullptr);
std::pair<ImagePlane, ImagePlane> infer(const PTNet& model, const ImagePlane& left, const ImagePlane& right,
                                        std::vector<StageTrace>* trace = nullptr);

}  // namespace ptnet
