#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "kimm/linalg.hpp"

namespace kimm {

/// Learning rate that rises linearly from 0 to `base` over the first
/// `warmup_steps` steps and then falls linearly to 0 at `total_steps`.
/// Steps are 1-based.
class WarmupLinearSchedule {
 public:
  WarmupLinearSchedule(double base, std::size_t total_steps, double warmup_fraction);

  double operator()(std::size_t step) const;
  std::size_t warmup_steps() const { return warmup_; }
  std::size_t total_steps() const { return total_; }

 private:
  double base_;
  std::size_t total_;
  std::size_t warmup_;
};

/// Adaptive-moment update with bias correction and no weight decay. One
/// moment pair per parameter matrix, matched by position.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Call once per optimisation step, before the per-matrix updates.
  void begin_step() { ++t_; }

  /// Updates `param` in place from `grad`; `slot` identifies the matrix.
  void update(std::size_t slot, RowMatrixXd& param, const RowMatrixXd& grad, double lr);

  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<RowMatrixXd> m_, v_;
};

}  // namespace kimm
