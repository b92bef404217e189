// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/optim.hpp"

#include <cmath>

#include "sslasr/common.hpp"

namespace sslasr {

Adam::Adam(std::vector<ad::Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.warmup_steps < 1) throw ConfigError("adam: warmup_steps must be >= 1");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto& p : params_) {
    if (!p.requires_grad())
      throw ConfigError("adam: parameter without requires_grad");
    m_.emplace_back(p.values().size(), 0.0);
    v_.emplace_back(p.values().size(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double Adam::current_lr() const {
  double t = static_cast<double>(step_ + 1);
  double w = static_cast<double>(cfg_.warmup_steps);
  return cfg_.lr * std::min(t / w, std::sqrt(w / t));
}

void Adam::step() {
  double lr = current_lr();
  ++step_;

  double scale = 1.0;
  if (cfg_.grad_clip > 0) {
    double sq = 0;
    for (auto& p : params_)
      for (double g : p.grad()) sq += g * g;
    double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) scale = cfg_.grad_clip / norm;
  }

  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& val = params_[i].values();
    auto& grad = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < val.size(); ++j) {
      double g = grad[j] * scale;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      val[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace sslasr
