#include "plm/adafactor.hpp"

#include <algorithm>
#include <cmath>

#include "plm/error.hpp"

namespace plm {

Adafactor::Adafactor(std::vector<Tensor> params, AdafactorConfig config)
    : params_(std::move(params)), config_(config) {
  slots_.reserve(params_.size());
  for (const Tensor& p : params_) {
    Slot s;
    const Shape& shape = p.shape();
    if (shape.size() >= 2) {
      s.factored = true;
      s.rows = shape[shape.size() - 2];
      s.cols = shape[shape.size() - 1];
      s.batch = p.numel() / std::max<std::size_t>(1, s.rows * s.cols);
      s.row_acc.assign(s.batch * s.rows, 0.0);
      s.col_acc.assign(s.batch * s.cols, 0.0);
    } else {
      s.full_acc.assign(p.numel(), 0.0);
    }
    slots_.push_back(std::move(s));
  }
}

double Adafactor::current_lr() const {
  const double t = static_cast<double>(std::max<std::int64_t>(step_, 1));
  if (config_.warmup_steps <= 0) return config_.learning_rate;
  return config_.learning_rate * std::min(1.0, t / static_cast<double>(config_.warmup_steps));
}

void Adafactor::step() {
  for (const Tensor& p : params_)
    if (!p.has_grad()) throw ContractError("Adafactor::step: parameter without a gradient");

  ++step_;
  const double t = static_cast<double>(step_);
  const double beta2 = 1.0 - std::pow(t, config_.decay_rate);
  const double lr = current_lr();

  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    Slot& s = slots_[k];
    auto g = p.grad();
    auto w = p.mutable_data();
    const std::size_t n = w.size();
    std::vector<double> update(n);

    if (s.factored) {
      const std::size_t R = s.rows, C = s.cols;
      for (std::size_t b = 0; b < s.batch; ++b) {
        const double* gb = g.data() + b * R * C;
        double* rows = s.row_acc.data() + b * R;
        double* cols = s.col_acc.data() + b * C;
        for (std::size_t i = 0; i < R; ++i) {
          double m = 0.0;
          for (std::size_t j = 0; j < C; ++j) m += gb[i * C + j] * gb[i * C + j] + config_.eps1;
          rows[i] = beta2 * rows[i] + (1.0 - beta2) * (m / static_cast<double>(C));
        }
        for (std::size_t j = 0; j < C; ++j) {
          double m = 0.0;
          for (std::size_t i = 0; i < R; ++i) m += gb[i * C + j] * gb[i * C + j] + config_.eps1;
          cols[j] = beta2 * cols[j] + (1.0 - beta2) * (m / static_cast<double>(R));
        }
        double row_mean = 0.0;
        for (std::size_t i = 0; i < R; ++i) row_mean += rows[i];
        row_mean /= static_cast<double>(R);
        for (std::size_t i = 0; i < R; ++i) {
          const double rf = 1.0 / std::sqrt(rows[i] / row_mean);
          for (std::size_t j = 0; j < C; ++j)
            update[b * R * C + i * C + j] = rf / std::sqrt(cols[j]) * gb[i * C + j];
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        s.full_acc[i] = beta2 * s.full_acc[i] + (1.0 - beta2) * (g[i] * g[i] + config_.eps1);
        update[i] = g[i] / std::sqrt(s.full_acc[i]);
      }
    }

    double ss = 0.0;
    for (double u : update) ss += u * u;
    const double rms = n ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
    const double denom = std::max(1.0, rms / config_.clip_threshold);

    for (std::size_t i = 0; i < n; ++i) {
      if (config_.weight_decay != 0.0) w[i] += -config_.weight_decay * lr * w[i];
      w[i] -= lr * update[i] / denom;
    }
    p.clear_grad();
  }
}

}  // namespace plm
