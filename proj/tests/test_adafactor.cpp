#include <cmath>
#include <vector>

#include "doctest.h"
#include "plm/adafactor.hpp"
#include "plm/error.hpp"

using namespace plm;

namespace {

// Straight transcription of the unfactored update for one scalar.
struct ScalarAdafactorOracle {
  AdafactorConfig cfg;
  double v = 0.0;
  int t = 0;

  double step(double p, double g) {
    ++t;
    const double beta2 = 1.0 - std::pow(static_cast<double>(t), cfg.decay_rate);
    v = beta2 * v + (1.0 - beta2) * (g * g + cfg.eps1);
    double u = g / std::sqrt(v);
    const double rms = std::abs(u);
    u /= std::max(1.0, rms / cfg.clip_threshold);
    double lr = cfg.learning_rate;
    if (cfg.warmup_steps > 0) lr *= std::min(1.0, static_cast<double>(t) / static_cast<double>(cfg.warmup_steps));
    return p - cfg.weight_decay * lr * p - lr * u;
  }
};

void set_grad(Tensor& t, std::vector<double> g) {
  auto dst = t.mutable_grad();
  std::copy(g.begin(), g.end(), dst.begin());
}

}  // namespace

TEST_CASE("zero gradient without weight decay is a no-op") {
  Tensor p({2, 3}, {1, -2, 3, 0.5, 0.25, -1}, true);
  const std::vector<double> before(p.data().begin(), p.data().end());
  Adafactor opt({p}, AdafactorConfig{.weight_decay = 0.0, .warmup_steps = 0});
  for (int i = 0; i < 3; ++i) {
    set_grad(p, std::vector<double>(6, 0.0));
    opt.step();
  }
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == before);
  CHECK(opt.step_count() == 3);
}

TEST_CASE("zero gradient with weight decay scales by (1 - lr * wd)") {
  Tensor p({3}, {1.0, -2.0, 4.0}, true);
  Adafactor opt({p}, AdafactorConfig{.weight_decay = 0.1, .learning_rate = 0.15, .warmup_steps = 0});
  set_grad(p, {0.0, 0.0, 0.0});
  opt.step();
  CHECK(p.data()[0] == doctest::Approx(1.0 * (1 - 0.015)).epsilon(1e-15));
  CHECK(p.data()[1] == doctest::Approx(-2.0 * (1 - 0.015)).epsilon(1e-15));
  CHECK(p.data()[2] == doctest::Approx(4.0 * (1 - 0.015)).epsilon(1e-15));
}

TEST_CASE("scalar parameter matches transcription oracle over three steps") {
  for (std::int64_t warmup : {0, 2}) {
    AdafactorConfig cfg{.weight_decay = 0.1, .learning_rate = 0.15, .warmup_steps = warmup};
    Tensor p({1}, {0.5}, true);
    Adafactor opt({p}, cfg);
    ScalarAdafactorOracle oracle{cfg};
    double expected = 0.5;
    for (double g : {0.3, -0.2, 0.1}) {
      set_grad(p, {g});
      opt.step();
      expected = oracle.step(expected, g);
      CHECK(std::abs(p.data()[0] - expected) <= 1e-10);
    }
  }
}

TEST_CASE("factored update matches direct evaluation on one step") {
  AdafactorConfig cfg{.weight_decay = 0.0, .learning_rate = 0.01, .warmup_steps = 0};
  const std::vector<double> g{0.1, -0.4, 0.2, 0.3, 0.05, -0.6};
  Tensor p({2, 3}, std::vector<double>(6, 0.0), true);
  Adafactor opt({p}, cfg);
  set_grad(p, g);
  opt.step();
  // Step 1 has beta2 = 0, so the accumulators equal the row/column means of g^2.
  double r[2] = {0, 0}, c[3] = {0, 0, 0};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      r[i] += (g[i * 3 + j] * g[i * 3 + j] + cfg.eps1) / 3.0;
      c[j] += (g[i * 3 + j] * g[i * 3 + j] + cfg.eps1) / 2.0;
    }
  const double rmean = (r[0] + r[1]) / 2.0;
  std::vector<double> u(6);
  double ss = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) {
      u[i * 3 + j] = g[i * 3 + j] / std::sqrt(r[i] / rmean * c[j]);
      ss += u[i * 3 + j] * u[i * 3 + j];
    }
  const double denom = std::max(1.0, std::sqrt(ss / 6.0) / cfg.clip_threshold);
  for (int k = 0; k < 6; ++k) CHECK(std::abs(p.data()[k] - (-0.01 * u[k] / denom)) <= 1e-12);

  for (const auto& slot : opt.slots()) {
    for (double v : slot.row_acc) CHECK(v >= 0.0);
    for (double v : slot.col_acc) CHECK(v >= 0.0);
  }
  CHECK_FALSE(p.has_grad());
}

TEST_CASE("linear warmup and missing grads") {
  Tensor p({1}, {1.0}, true);
  Adafactor opt({p}, AdafactorConfig{.learning_rate = 0.15, .warmup_steps = 500});
  CHECK(opt.current_lr() == doctest::Approx(0.15 / 500));
  CHECK_THROWS_AS(opt.step(), ContractError);
}
