#include "kimm/optimizer.hpp"

#include <algorithm>

#include "kimm/error.hpp"

namespace kimm {

WarmupLinearSchedule::WarmupLinearSchedule(double base, std::size_t total_steps, double warmup_fraction)
    : base_(base), total_(total_steps) {
  if (total_steps == 0) throw ValidationError("schedule needs at least one step");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw ValidationError("warmup_fraction must lie in [0, 1)");
  warmup_ = warmup_fraction > 0.0
                ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total_steps))))
                : 0;
  warmup_ = std::min(warmup_, total_);
}

double WarmupLinearSchedule::operator()(std::size_t step) const {
  if (step == 0 || step > total_) return 0.0;
  if (step <= warmup_) return base_ * static_cast<double>(step) / static_cast<double>(warmup_);
  if (total_ == warmup_) return base_;
  return base_ * static_cast<double>(total_ - step + 1) / static_cast<double>(total_ - warmup_);
}

void Adam::update(std::size_t slot, RowMatrixXd& param, const RowMatrixXd& grad, double lr) {
  if (slot >= m_.size()) {
    m_.resize(slot + 1);
    v_.resize(slot + 1);
  }
  if (m_[slot].size() == 0) {
    m_[slot] = RowMatrixXd::Zero(param.rows(), param.cols());
    v_[slot] = RowMatrixXd::Zero(param.rows(), param.cols());
  }
  auto& m = m_[slot];
  auto& v = v_[slot];
  m = beta1_ * m + (1.0 - beta1_) * grad;
  v = beta2_ * v + (1.0 - beta2_) * grad.cwiseProduct(grad);
  if (lr == 0.0) return;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
}

}  // namespace kimm
