#pragma once

#include "ponita/tensor.hpp"

#include <cstddef>
#include <vector>

namespace ponita::optim {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are created on the first step
/// and follow the iteration order of the parameter store.
template <class T>
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(ad::ParameterStore<T>& params);
  void step(ad::ParameterStore<T>& params, double lr);

  std::size_t steps_taken() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Linear warmup from base_lr / warmup at epoch 0 to base_lr at epoch == warmup,
/// then a half cosine down to 0 over the remaining epochs.
double cosine_lr(std::size_t epoch, std::size_t total, std::size_t warmup, double base_lr);

}  // namespace ponita::optim
