#include <cmath>
#include <vector>

#include "doctest.h"
#include "plm/error.hpp"
#include "plm/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace plm;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double scale_by = 1.0) {
  return Tensor::randn(std::move(shape), rng, scale_by, requires_grad);
}

std::vector<double> naive_matmul(const Tensor& a, const Tensor& b) {
  std::vector<double> out(a.rows() * b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) acc += a.at(i, p) * b.at(p, j);
      out[i * b.cols() + j] = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("matmul") {
  const Tensor m({2, 2}, {1, 2, 3, 4});
  const auto im = matmul(Tensor::eye(2), m);
  CHECK(std::vector<double>(im.data().begin(), im.data().end()) == std::vector<double>{1, 2, 3, 4});

  const Tensor proj({2, 2}, {1, 0, 0, 0});
  const Tensor b({2, 2}, {5, 6, 7, 8});
  const auto pb = matmul(proj, b);
  CHECK(std::vector<double>(pb.data().begin(), pb.data().end()) == std::vector<double>{5, 6, 0, 0});

  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_tensor({3, 4}, rng, false);
    const Tensor y = random_tensor({4, 2}, rng, false);
    const auto expected = naive_matmul(x, y);
    const auto got = matmul(x, y);
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(got.data()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("softmax") {
  const auto half = softmax(Tensor({2}, {0.0, 0.0}));
  CHECK(half.data()[0] == 0.5);
  CHECK(half.data()[1] == 0.5);

  // 30-digit reference values for softmax([1, 2, 3]).
  const auto s = softmax(Tensor({3}, {1, 2, 3}));
  CHECK(s.data()[0] == doctest::Approx(0.0900305731703805).epsilon(1e-12));
  CHECK(s.data()[1] == doctest::Approx(0.244728471054798).epsilon(1e-12));
  CHECK(s.data()[2] == doctest::Approx(0.665240955774822).epsilon(1e-12));

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor({4, 6}, rng, false, 3.0);
    const double c = 100.0 * (rng.uniform() - 0.5);
    std::vector<double> shifted(x.data().begin(), x.data().end());
    for (double& v : shifted) v += c;
    for (int axis : {0, 1}) {
      const auto a = softmax(x, axis);
      const auto b = softmax(Tensor({4, 6}, shifted), axis);
      for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
    }
    const auto rows = softmax(x, -1);
    for (std::size_t i = 0; i < 4; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(rows.at(i, j) >= 0.0);
        total += rows.at(i, j);
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }

  CHECK_THROWS_AS(softmax(Tensor({2}, {std::nan(""), 0.0})), NumericError);
}

TEST_CASE("cross_entropy") {
  const std::vector<TokenId> targets{2, 0, 1};
  std::vector<double> confident(3 * 4, 0.0);
  for (std::size_t i = 0; i < 3; ++i) confident[i * 4 + static_cast<std::size_t>(targets[i])] = 1e6;
  CHECK(cross_entropy(Tensor({3, 4}, confident), targets).item() == doctest::Approx(0.0));

  const std::vector<TokenId> t8{3, 7};
  CHECK(cross_entropy(Tensor::zeros({2, 8}), t8).item() == doctest::Approx(std::log(8.0)).epsilon(1e-15));

  // Per-position scalar log-sum-exp oracle.
  Rng rng(5);
  const Tensor logits = random_tensor({5, 11}, rng, false, 2.0);
  std::vector<TokenId> tg(5);
  for (auto& t : tg) t = static_cast<TokenId>(rng.below(11));
  const std::vector<bool> mask{true, false, true, true, false};
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    if (!mask[i]) continue;
    double mx = -1e300;
    for (std::size_t j = 0; j < 11; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < 11; ++j) z += std::exp(logits.at(i, j) - mx);
    total += mx + std::log(z) - logits.at(i, static_cast<std::size_t>(tg[i]));
    ++count;
  }
  CHECK(std::abs(cross_entropy(logits, tg, mask).item() - total / count) <= 1e-10);

  CHECK_THROWS_AS(cross_entropy(logits, tg, std::vector<bool>(5, false)), NumericError);
  std::vector<TokenId> bad{0, 1, 2, 3, 11};
  CHECK_THROWS_AS(cross_entropy(logits, bad), ContractError);
}

TEST_CASE("backward basics") {
  Tensor x({3}, {1, 2, 3}, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y({2}, {1, 2}, true);
  backward(sum(mul(y, y)));
  CHECK(y.grad()[0] == 2.0);
  CHECK(y.grad()[1] == 4.0);

  SUBCASE("a tensor used twice accumulates both contributions") {
    Tensor z({4}, {1, -1, 2, 0.5}, true);
    backward(add(sum(z), sum(z)));
    for (double g : z.grad()) CHECK(g == 2.0);
  }

  SUBCASE("leaf grads accumulate across backward calls until cleared") {
    Tensor z({2}, {1, 1}, true);
    backward(sum(z));
    backward(sum(z));
    CHECK(z.grad()[0] == 2.0);
    z.clear_grad();
    CHECK_FALSE(z.has_grad());
  }

  CHECK_THROWS_AS(backward(Tensor::zeros({2}, true)), ContractError);
}

TEST_CASE("no-grad mode records nothing") {
  Tensor x({2}, {1, 2}, true);
  NoGradGuard guard;
  const auto y = sum(mul(x, x));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("finite-difference gradient checks for every op") {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 5}, rng);
    Tensor c = random_tensor({3, 4}, rng);
    Tensor bias = random_tensor({5}, rng);
    Tensor gain = random_tensor({4}, rng);
    Tensor table = random_tensor({6, 4}, rng);
    Tensor w = random_tensor({5, 5}, rng);
    const std::vector<TokenId> ids{0, 3, 3, 5};
    const std::vector<TokenId> targets{1, 4, 0};

    auto check = [](const char* name, const std::function<Tensor()>& fn, std::vector<Tensor> params) {
      const auto r = testing::check_gradients(fn, std::move(params));
      INFO(name << ": " << r.worst);
      CHECK(r.within(1e-4));
    };

    // Each loss contracts with a fixed random projection so no gradient is trivially uniform.
    const Tensor proj35 = Tensor::randn({3, 5}, rng, 1.0);
    const Tensor proj34 = Tensor::randn({3, 4}, rng, 1.0);
    auto contract = [](const Tensor& x, const Tensor& p) { return sum(mul(x, p)); };

    check("matmul", [&] { return contract(matmul(a, b), proj35); }, {a, b});
    check("transpose", [&] { return contract(transpose(transpose(a)), proj34); }, {a});
    check("add/sub/mul", [&] { return contract(mul(add(a, c), sub(a, c)), proj34); }, {a, c});
    check("scale", [&] { return contract(scale(a, -2.5), proj34); }, {a});
    check("add_row", [&] { return contract(add_row(matmul(a, b), bias), proj35); }, {a, b, bias});
    check("concat/slice rows", [&] {
      const Tensor parts[] = {a, c};
      return contract(slice_rows(concat_rows(parts), 2, 3), proj34);
    }, {a, c});
    check("concat/slice cols", [&] {
      const Tensor parts[] = {slice_cols(a, 0, 2), slice_cols(c, 1, 2)};
      return contract(concat_cols(parts), proj34);
    }, {a, c});
    check("embedding", [&] { return sum(mul(embedding(table, ids), embedding(table, ids))); }, {table});
    check("rms_norm", [&] { return contract(rms_norm(a, gain), proj34); }, {a, gain});
    check("gelu", [&] { return contract(gelu(a), proj34); }, {a});
    check("softmax rows", [&] { return contract(softmax(a, -1), proj34); }, {a});
    check("softmax cols", [&] { return contract(softmax(a, 0), proj34); }, {a});
    check("causal softmax", [&] {
      return sum(mul(softmax(causal_mask(w), -1), w));
    }, {w});
    check("cross_entropy", [&] { return cross_entropy(matmul(a, b), targets, {true, false, true}); }, {a, b});
    check("mean_rows", [&] { return sum(mul(mean_rows(a), mean_rows(c))); }, {a, c});
    check("mean", [&] { return mean(mul(a, a)); }, {a});
  }
}

TEST_CASE("structural edge cases") {
  const Tensor empty = Tensor::zeros({0, 3});
  const Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor parts[] = {empty, x};
  CHECK(concat_rows(parts).rows() == 2);
  CHECK_THROWS_AS(slice_rows(x, 1, 2), ShapeError);
  const std::vector<TokenId> oob{3};
  CHECK_THROWS_AS(embedding(x, oob), ContractError);
  CHECK_THROWS_AS(causal_mask(x), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
}
