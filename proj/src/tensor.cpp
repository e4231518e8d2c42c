#include "plm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <unordered_set>

#include "plm/error.hpp"

namespace plm {

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void require_rank2(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a rank-2 tensor, got " +
                     (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

void require_finite(std::span<const double> v, const char* op) {
  for (double x : v)
    if (std::isnan(x)) throw NumericError(std::string(op) + ": NaN input");
}

// Creates the result node and wires it into the graph when any input needs a
// gradient and recording is enabled.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    bool needs = false;
    for (const Tensor* in : inputs) needs = needs || in->requires_grad();
    if (needs) {
      node->requires_grad = true;
      for (const Tensor* in : inputs) node->parents.push_back(in->node());
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

Tensor make_result_n(Shape shape, std::vector<double> data, std::span<const Tensor> inputs,
                     std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    bool needs = std::any_of(inputs.begin(), inputs.end(),
                             [](const Tensor& t) { return t.requires_grad(); });
    if (needs) {
      node->requires_grad = true;
      for (const Tensor& in : inputs) node->parents.push_back(in.node());
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (plm::numel(shape) != data.size())
    throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = plm::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<double> v(plm::numel(shape));
  for (double& x : v) x = stddev * rng.normal();
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::eye(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(v));
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("Tensor: undefined tensor");
  return node_->shape;
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw ShapeError("Tensor: axis out of range for " + shape_str(s));
  return s[axis];
}

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() {
  if (!node_->is_leaf()) throw ContractError("Tensor: in-place mutation of a non-leaf tensor");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("Tensor::item on " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const { return node_->data[row * cols() + col]; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf()) throw ContractError("Tensor: requires_grad can only be set on leaves");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }
void Tensor::clear_grad() { node_->grad.clear(); }

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(node_->shape, node_->data, requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const double* G = self.grad.data();
    if (na.requires_grad) {
      auto& ga = na.ensure_grad();
      const double* B = nb.data.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* grow = G + i * n;
          const double* brow = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
    }
    if (nb.requires_grad) {
      auto& gb = nb.ensure_grad();
      const double* A = na.data.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          const double* grow = G + i * n;
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  auto in = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_result({c, r}, std::move(out), {&x}, [r, c](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.data[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.data[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return make_result(x.shape(), std::move(out), {&x}, [factor](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_rank2(x, "add_row");
  const std::size_t r = x.rows(), c = x.cols();
  if (bias.numel() != c) throw ShapeError("add_row: bias length differs from column count");
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bv[j];
  return make_result(x.shape(), std::move(out), {&x, &bias}, [r, c](Node& self) {
    Node& nx = *self.parents[0];
    Node& nb = *self.parents[1];
    if (nx.requires_grad) {
      auto& g = nx.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  for (const Tensor& p : parts) require_rank2(p, "concat_rows");
  const std::size_t c = parts.front().cols();
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != c) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(rows * c);
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_result_n({rows, c}, std::move(out), parts, [offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad || p.data.empty()) continue;
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  for (const Tensor& p : parts) require_rank2(p, "concat_cols");
  const std::size_t r = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> col_offsets;
  for (const Tensor& p : parts) {
    if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
    col_offsets.push_back(cols);
    cols += p.cols();
  }
  std::vector<double> out(r * cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t pc = parts[k].cols();
    auto in = parts[k].data();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(in.data() + i * pc, pc, out.data() + i * cols + col_offsets[k]);
  }
  return make_result_n({r, cols}, std::move(out), parts, [r, cols, col_offsets](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const std::size_t pc = p.shape[1];
      auto& g = p.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < pc; ++j) g[i * pc + j] += self.grad[i * cols + col_offsets[k] + j];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_rows");
  if (start + count > x.rows()) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t c = x.cols();
  auto in = x.data();
  std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(start * c),
                          in.begin() + static_cast<std::ptrdiff_t>((start + count) * c));
  return make_result({count, c}, std::move(out), {&x}, [start, c](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * c + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_cols");
  if (start + count > x.cols()) throw ShapeError("slice_cols: range out of bounds");
  const std::size_t r = x.rows(), c = x.cols();
  auto in = x.data();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(in.data() + i * c + start, count, out.data() + i * count);
  return make_result({r, count}, std::move(out), {&x}, [r, c, start, count](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * c + start + j] += self.grad[i * count + j];
  });
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
  require_rank2(table, "embedding");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<TokenId> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * d);
  auto tv = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab)
      throw ContractError("embedding: token id " + std::to_string(idx[i]) + " out of range");
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  }
  return make_result({idx.size(), d}, std::move(out), {&table}, [idx, d](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[static_cast<std::size_t>(idx[i]) * d + j] += self.grad[i * d + j];
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
  require_rank2(x, "rms_norm");
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.numel() != c) throw ShapeError("rms_norm: gain length differs from column count");
  auto xv = x.data();
  auto gv = gain.data();
  std::vector<double> inv_rms(r);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += xv[i * c + j] * xv[i * c + j];
    inv_rms[i] = 1.0 / std::sqrt(ss / static_cast<double>(c) + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] * inv_rms[i] * gv[j];
  }
  return make_result(x.shape(), std::move(out), {&x, &gain}, [r, c, inv_rms](Node& self) {
    Node& nx = *self.parents[0];
    Node& ng = *self.parents[1];
    const auto& X = nx.data;
    const auto& G = ng.data;
    if (ng.requires_grad) {
      auto& gg = ng.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gg[j] += self.grad[i * c + j] * X[i * c + j] * inv_rms[i];
    }
    if (nx.requires_grad) {
      auto& gx = nx.ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;  // sum_j dxhat_j * xhat_j
        for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * G[j] * X[i * c + j] * inv_rms[i];
        const double m = dot / static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) {
          const double xhat = X[i * c + j] * inv_rms[i];
          gx[i * c + j] += (self.grad[i * c + j] * G[j] - xhat * m) * inv_rms[i];
        }
      }
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  return make_result(x.shape(), std::move(out), {&x}, [](Node& self) {
    Node& nx = *self.parents[0];
    auto& g = nx.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = nx.data[i];
      const double t = std::tanh(kC * (v + kA * v * v * v));
      const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      g[i] += self.grad[i] * d;
    }
  });
}

Tensor relu(const Tensor& x) {
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_result(x.shape(), std::move(out), {&x}, [](Node& self) {
    Node& nx = *self.parents[0];
    auto& g = nx.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (nx.data[i] > 0.0) g[i] += self.grad[i];
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("softmax: scalar input");
  const int rank = static_cast<int>(s.size());
  const int ax = axis < 0 ? axis + rank : axis;
  if (ax < 0 || ax >= rank) throw ShapeError("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (int i = ax + 1; i < rank; ++i) inner *= s[static_cast<std::size_t>(i)];
  const std::size_t n = s[static_cast<std::size_t>(ax)];

  auto xv = x.data();
  require_finite(xv, "softmax");
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, xv[base + k * inner]);
      if (!std::isfinite(mx)) throw NumericError("softmax: slice has no finite entry");
      double z = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double e = std::exp(xv[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= z;
    }
  return make_result(s, std::move(out), {&x}, [outer, inner, n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const auto& y = self.data;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += self.grad[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t i = base + k * inner;
          g[i] += y[i] * (self.grad[i] - dot);
        }
      }
  });
}

Tensor causal_mask(const Tensor& scores) {
  require_rank2(scores, "causal_mask");
  const std::size_t n = scores.rows();
  if (scores.cols() != n) throw ShapeError("causal_mask: score matrix must be square");
  std::vector<double> out(scores.data().begin(), scores.data().end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out[i * n + j] = -std::numeric_limits<double>::infinity();
  return make_result(scores.shape(), std::move(out), {&scores}, [n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) g[i * n + j] += self.grad[i * n + j];
  });
}

// ---------------------------------------------------------------------------
// Losses and reductions

double log_sum_exp(std::span<const double> values) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : values) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return mx;
  double z = 0.0;
  for (double v : values) z += std::exp(v - mx);
  return mx + std::log(z);
}

std::vector<double> softmax_values(std::span<const double> logits) {
  require_finite(logits, "softmax");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  if (!std::isfinite(mx)) throw NumericError("softmax: no finite entry");
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                     const std::vector<bool>& mask) {
  require_rank2(logits, "cross_entropy");
  const std::size_t t = logits.rows(), v = logits.cols();
  if (targets.size() != t) throw ShapeError("cross_entropy: one target per row required");
  if (!mask.empty() && mask.size() != t) throw ShapeError("cross_entropy: mask length differs from rows");
  auto lv = logits.data();
  require_finite(lv, "cross_entropy");
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  std::vector<bool> active(t, true);
  if (!mask.empty()) active = mask;
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    if (tgt[i] < 0 || static_cast<std::size_t>(tgt[i]) >= v)
      throw ContractError("cross_entropy: target id " + std::to_string(tgt[i]) + " out of range");
    if (!active[i]) continue;
    auto row = lv.subspan(i * v, v);
    total += log_sum_exp(row) - row[static_cast<std::size_t>(tgt[i])];
    ++count;
  }
  if (count == 0) throw NumericError("cross_entropy: every position is masked; mean is undefined");
  const double inv = 1.0 / static_cast<double>(count);
  return make_result(Shape{}, {total * inv}, {&logits}, [t, v, tgt, active, inv](Node& self) {
    Node& nl = *self.parents[0];
    auto& g = nl.ensure_grad();
    const double up = self.grad[0] * inv;
    for (std::size_t i = 0; i < t; ++i) {
      if (!active[i]) continue;
      std::span<const double> row(nl.data.data() + i * v, v);
      auto p = softmax_values(row);
      for (std::size_t j = 0; j < v; ++j) g[i * v + j] += up * p[j];
      g[i * v + static_cast<std::size_t>(tgt[i])] -= up;
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result(Shape{}, {s}, {&x}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw NumericError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_rows(const Tensor& x) {
  require_rank2(x, "mean_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (r == 0) throw NumericError("mean_rows: no rows");
  std::vector<double> out(c, 0.0);
  auto xv = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += xv[i * c + j];
  for (double& v : out) v /= static_cast<double>(r);
  return make_result({1, c}, std::move(out), {&x}, [r, c](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j] * inv;
  });
}

// ---------------------------------------------------------------------------
// Reverse pass

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward: loss must be a scalar tensor");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Interior grads are per-pass; leaf grads accumulate until cleared.
  for (Node* n : order)
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  loss.node()->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

}  // namespace plm
