#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lantern/kernels.hpp"
#include "lantern/tensor.hpp"

namespace lantern {

// Linear warmup to the base rate, then cosine decay to zero.
struct LrSchedule {
  double base_lr = 1e-5;
  double warmup_ratio = 0.05;
  long total_steps = 1;

  // step is the post-increment counter (first update sees step=1)
  double multiplier(long step) const {
    const double warm = warmup_ratio * static_cast<double>(total_steps);
    double m;
    if (warm > 0.0 && static_cast<double>(step) < warm) {
      m = static_cast<double>(step) / warm;
    } else {
      const double denom = static_cast<double>(total_steps) - warm;
      double progress = denom > 0.0 ? (static_cast<double>(step) - warm) / denom : 1.0;
      progress = std::min(std::max(progress, 0.0), 1.0);
      m = 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
    }
    return std::min(std::max(m, 0.0), 1.0);
  }

  double lr_at(long step) const { return base_lr * multiplier(step); }
};

// AdamW with bias correction and decoupled weight decay. Moments are keyed by
// registration order; parameter shapes are fixed at registration.
template <class T>
class AdamW {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  AdamW(std::vector<std::pair<std::string, TensorT<T>>>* params, Config cfg,
        LrSchedule schedule)
      : params_(params), cfg_(cfg), schedule_(schedule) {
    for (auto& [name, p] : *params_) {
      m_.emplace_back(p.numel(), T(0));
      v_.emplace_back(p.numel(), T(0));
      sizes_.push_back(p.numel());
    }
  }

  long step_count() const { return step_; }
  const LrSchedule& schedule() const { return schedule_; }
  double last_lr() const { return last_lr_; }

  // applies one update from the gradients currently stored on the parameters
  void step() {
    ++step_;
    const double lr = schedule_.lr_at(step_);
    last_lr_ = lr;
    for (std::size_t i = 0; i < params_->size(); ++i) {
      auto& [name, p] = (*params_)[i];
      if (p.numel() != sizes_[i])
        throw ShapeError("adamw: parameter '" + name + "' changed size");
      if (!p.has_grad())
        throw ShapeError("adamw: parameter '" + name + "' has no gradient");
      kernels::adamw_update(p.data(), p.grad(), m_[i].data(), v_[i].data(),
                            p.numel(), T(lr), T(cfg_.beta1), T(cfg_.beta2),
                            T(cfg_.eps), T(cfg_.weight_decay), step_);
    }
  }

  void zero_grad() {
    for (auto& [name, p] : *params_) p.zero_grad();
  }

  // flattened optimizer state for checkpointing
  std::vector<std::vector<T>>& moments1() { return m_; }
  std::vector<std::vector<T>>& moments2() { return v_; }
  void set_step_count(long s) { step_ = s; }

 private:
  std::vector<std::pair<std::string, TensorT<T>>>* params_;
  Config cfg_;
  LrSchedule schedule_;
  std::vector<std::vector<T>> m_, v_;
  std::vector<std::size_t> sizes_;
  long step_ = 0;
  double last_lr_ = 0.0;
};

}  // namespace lantern
