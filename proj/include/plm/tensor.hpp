#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "plm/rng.hpp"

namespace plm {

using Shape = std::vector<std::size_t>;
using TokenId = std::int32_t;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

std::size_t numel(const Shape& shape);

/// Dense row-major float64 array with reverse-mode gradient tracking.
///
/// Tensor is a cheap handle: copies share the same storage and graph node.
/// Values are immutable once produced by an operation; only leaves (created
/// by the constructors below) may be modified in place, which is how
/// optimizers and initializers update parameters.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);
  static Tensor eye(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;
  /// Rows/cols of a rank-2 tensor.
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const double> data() const;
  /// In-place access for leaves only (parameter init and optimizer steps).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void clear_grad();

  /// Deep copy of the values as a fresh leaf.
  Tensor clone(bool requires_grad = false) const;
  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---------------------------------------------------------------------------
// Differentiable operations. Rank-2 operands are [rows x cols].

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
/// x[T x d] + bias[d] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);

/// Gathers rows of table[V x d] for each id.
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-6);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);

/// Numerically stable softmax along `axis` (negative counts from the end).
Tensor softmax(const Tensor& x, int axis = -1);
/// Sets entries above the diagonal of a square score matrix to -inf.
Tensor causal_mask(const Tensor& scores);

/// Mean over unmasked rows of -log softmax(logits)[target]. An empty mask
/// means every row contributes.
Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                     const std::vector<bool>& mask = {});

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Column-wise mean of x[T x d], shape [1 x d].
Tensor mean_rows(const Tensor& x);

/// Populates grads of every requires_grad tensor reachable from `loss`.
/// Leaf grads accumulate across calls until cleared.
void backward(const Tensor& loss);

// Non-differentiable helpers.
std::vector<double> softmax_values(std::span<const double> logits);
double log_sum_exp(std::span<const double> values);

}  // namespace plm
