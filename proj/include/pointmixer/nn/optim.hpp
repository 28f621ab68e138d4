#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "pointmixer/nn/params.hpp"

namespace pmx {

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// Classic momentum with weight decay folded into the gradient:
/// g' = g + wd*w;  v = mu*v + g';  w -= lr*v.
template <typename Scalar>
void sgd_step(ParamStore<Scalar>& params, const SgdOptions& opt) {
  const auto lr = static_cast<Scalar>(opt.lr);
  const auto mu = static_cast<Scalar>(opt.momentum);
  const auto wd = static_cast<Scalar>(opt.weight_decay);
  for (auto& p : params) {
    p.momentum = mu * p.momentum + (p.grad + wd * p.value);
    p.value -= lr * p.momentum;
  }
}

/// Rescales all gradients together so their global L2 norm is at most
/// max_norm (0 disables). Returns the norm before rescaling.
template <typename Scalar>
double clip_grad_norm(ParamStore<Scalar>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) sq += static_cast<double>(p.grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto f = static_cast<Scalar>(max_norm / norm);
    for (auto& p : params) p.grad *= f;
  }
  return norm;
}

inline double cosine_lr(int epoch, int total_epochs, double base_lr) {
  return base_lr * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(total_epochs)));
}

inline double step_lr(int epoch, const std::vector<int>& milestones, double base_lr, double factor) {
  double lr = base_lr;
  for (int m : milestones)
    if (epoch >= m) lr *= factor;
  return lr;
}

}  // namespace pmx
