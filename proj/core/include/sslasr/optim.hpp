// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_OPTIM_HPP
#define SSLASR_OPTIM_HPP

#include <cstdint>
#include <vector>

#include "sslasr/tensor.hpp"

namespace sslasr {

struct AdamConfig {
  double lr = 1e-3;          // peak learning rate
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double grad_clip = 5.0;    // global L2 norm; <= 0 disables
  int warmup_steps = 100;    // linear warmup then inverse-sqrt decay
};

/// Adam with warmup-then-inverse-sqrt schedule. The single writer of
/// parameter values; call zero_grad() between steps.
class Adam {
 public:
  Adam(std::vector<ad::Tensor> params, AdamConfig cfg);

  void zero_grad();
  void step();

  int64_t steps_done() const { return step_; }
  double current_lr() const;  // lr that the next step() will use

 private:
  std::vector<ad::Tensor> params_;
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace sslasr

#endif  // SSLASR_OPTIM_HPP
