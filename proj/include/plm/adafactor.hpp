#pragma once

#include <cstdint>
#include <vector>

#include "plm/tensor.hpp"

namespace plm {

/// Adafactor hyperparameters. Defaults are the generator-training values:
/// no relative step, no parameter scaling, no first moment.
struct AdafactorConfig {
  double eps1 = 1e-30;  // added to squared gradients
  double eps2 = 1e-3;   // only used by parameter scaling, which is off
  double clip_threshold = 1.0;
  double decay_rate = -0.8;
  double weight_decay = 0.1;
  double learning_rate = 0.15;
  std::int64_t warmup_steps = 500;
};

/// Factored second-moment optimizer (Shazeer & Stern, 2018) with an external
/// learning rate and linear warmup.
///
/// Parameters of rank >= 2 keep row and column accumulators over the last two
/// axes; lower-rank parameters keep a full accumulator. The update per step is
///
///   beta2_t = 1 - t^decay_rate
///   V       = beta2_t * V + (1 - beta2_t) * (g^2 + eps1)    (factored when rank >= 2)
///   u       = g / sqrt(V)
///   u      /= max(1, rms(u) / clip_threshold)
///   p       = p - lr_t * weight_decay * p - lr_t * u
///
/// with lr_t = learning_rate * min(1, t / warmup_steps).
class Adafactor {
 public:
  Adafactor(std::vector<Tensor> params, AdafactorConfig config);

  /// Applies one update to every parameter and clears their grads.
  void step();

  std::int64_t step_count() const { return step_; }
  double current_lr() const;
  const AdafactorConfig& config() const { return config_; }

  struct Slot {
    bool factored = false;
    std::size_t rows = 0, cols = 0, batch = 1;
    std::vector<double> row_acc;  // [batch x rows]
    std::vector<double> col_acc;  // [batch x cols]
    std::vector<double> full_acc;
  };
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  std::vector<Tensor> params_;
  std::vector<Slot> slots_;
  AdafactorConfig config_;
  std::int64_t step_ = 0;
};

}  // namespace plm
