#include "seqlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace seqlab {

namespace detail {

namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::int64_t shape_size(const Shape& s) {
  std::int64_t n = 1;
  for (std::int64_t d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor argument");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

void check_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a 2-D tensor, got shape " +
                                shape_str(t.shape()));
  }
}

void check_1d(const Tensor& t, const char* op) {
  if (t.ndim() != 1) {
    throw std::invalid_argument(std::string(op) + ": expected a 1-D tensor, got shape " +
                                shape_str(t.shape()));
  }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool enabled) { g_grad_enabled = enabled; }

void TensorNode::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void TensorNode::accumulate_grad(const std::vector<double>& g) {
  ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

Tensor make_op(Shape shape, std::vector<double> values, const char* op,
               std::vector<Tensor> inputs, std::function<void(const TensorNode&)> backprop) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->op = op;
  bool track = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) {
      if (t.defined() && t.node()->requires_grad) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::grad_enabled()) {
  detail::set_grad_enabled(false);
}

NoGradGuard::~NoGradGuard() { detail::set_grad_enabled(previous_); }

// ---- Tensor basics ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return constant(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::constant(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  std::int64_t n = detail::shape_size(shape);
  node->shape = std::move(shape);
  node->values.assign(static_cast<std::size_t>(n), value);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Tensor(std::move(node));
}

Tensor Tensor::uniform(Shape shape, double low, double high, Rng& rng, bool requires_grad) {
  auto node = std::make_shared<detail::TensorNode>();
  std::int64_t n = detail::shape_size(shape);
  node->shape = std::move(shape);
  node->values.resize(static_cast<std::size_t>(n));
  for (double& v : node->values) v = rng.uniform(low, high);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  std::int64_t n = detail::shape_size(shape);
  if (n != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("from_values: " + std::to_string(values.size()) +
                                " values do not fill a tensor of " + std::to_string(n) +
                                " elements");
  }
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw std::runtime_error("shape() on undefined tensor");
  return node_->shape;
}

std::int64_t Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw std::invalid_argument("dim(" + std::to_string(axis) + ") out of range for rank " +
                                std::to_string(s.size()));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::size() const {
  if (!node_) throw std::runtime_error("size() on undefined tensor");
  return node_->size();
}

const std::vector<double>& Tensor::values() const {
  if (!node_) throw std::runtime_error("values() on undefined tensor");
  return node_->values;
}

std::vector<double>& Tensor::mutable_values() {
  if (!node_) throw std::runtime_error("mutable_values() on undefined tensor");
  return node_->values;
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::runtime_error("item() requires a single-element tensor, got " +
                             std::to_string(size()) + " elements");
  }
  return node_->values[0];
}

double Tensor::at(std::int64_t flat_index) const {
  if (flat_index < 0 || flat_index >= size()) {
    throw std::invalid_argument("at(" + std::to_string(flat_index) + ") out of range for " +
                                std::to_string(size()) + " elements");
  }
  return node_->values[static_cast<std::size_t>(flat_index)];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->values.size() && !node_->values.empty();
}

const std::vector<double>& Tensor::grad() const {
  if (!node_) throw std::runtime_error("grad() on undefined tensor");
  if (node_->grad.size() != node_->values.size()) {
    throw std::runtime_error("grad() before any backward pass reached this tensor");
  }
  return node_->grad;
}

std::vector<double>& Tensor::mutable_grad() {
  if (!node_) throw std::runtime_error("mutable_grad() on undefined tensor");
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_) throw std::runtime_error("zero_grad() on undefined tensor");
  node_->grad.assign(node_->values.size(), 0.0);
}

void Tensor::backward() const {
  if (!node_) throw std::runtime_error("backward() on undefined tensor");
  if (node_->size() != 1) {
    throw std::runtime_error("backward() requires a scalar, got " +
                             std::to_string(node_->size()) + " elements");
  }
  if (!node_->requires_grad) {
    throw std::runtime_error("backward() on a tensor that does not track gradients");
  }
  // Iterative post-order over the grad-requiring subgraph; recursion depth on
  // long sequences would otherwise be unbounded.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      detail::TensorNode* parent = top.first->parents[top.second].get();
      ++top.second;
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }
  // Interior grads are per-sweep scratch; only leaves accumulate across calls.
  for (detail::TensorNode* n : order) {
    if (n->backprop) {
      n->grad.assign(n->values.size(), 0.0);
    } else {
      n->ensure_grad();
    }
  }
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

void Tensor::check_finite(const std::string& what) const {
  const std::vector<double>& v = values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw std::runtime_error(what + ": non-finite value " + std::to_string(v[i]) +
                               " at flat index " + std::to_string(i));
    }
  }
}

// ---- elementwise and linear algebra ----

Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_defined(a, "add");
  detail::check_defined(b, "add");
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  const std::vector<double>& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto* pa = a.node().get();
  auto* pb = b.node().get();
  return detail::make_op(a.shape(), std::move(out), "add", {a, b},
                         [pa, pb](const detail::TensorNode& o) {
                           if (pa->requires_grad)
                             for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
                           if (pb->requires_grad)
                             for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] += o.grad[i];
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_defined(a, "sub");
  detail::check_defined(b, "sub");
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  const std::vector<double>& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  auto* pa = a.node().get();
  auto* pb = b.node().get();
  return detail::make_op(a.shape(), std::move(out), "sub", {a, b},
                         [pa, pb](const detail::TensorNode& o) {
                           if (pa->requires_grad)
                             for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
                           if (pb->requires_grad)
                             for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] -= o.grad[i];
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_defined(a, "mul");
  detail::check_defined(b, "mul");
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  const std::vector<double>& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  auto* pa = a.node().get();
  auto* pb = b.node().get();
  return detail::make_op(a.shape(), std::move(out), "mul", {a, b},
                         [pa, pb](const detail::TensorNode& o) {
                           if (pa->requires_grad)
                             for (std::size_t i = 0; i < o.grad.size(); ++i)
                               pa->grad[i] += o.grad[i] * pb->values[i];
                           if (pb->requires_grad)
                             for (std::size_t i = 0; i < o.grad.size(); ++i)
                               pb->grad[i] += o.grad[i] * pa->values[i];
                         });
}

Tensor scale(const Tensor& a, double c) {
  detail::check_defined(a, "scale");
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  auto* pa = a.node().get();
  return detail::make_op(a.shape(), std::move(out), "scale", {a},
                         [pa, c](const detail::TensorNode& o) {
                           if (pa->requires_grad)
                             for (std::size_t i = 0; i < o.grad.size(); ++i)
                               pa->grad[i] += c * o.grad[i];
                         });
}

Tensor add_list(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw std::invalid_argument("add_list: no terms");
  for (const Tensor& t : terms) {
    detail::check_defined(t, "add_list");
    detail::check_same_shape(terms.front(), t, "add_list");
  }
  std::vector<double> out(terms.front().values());
  for (std::size_t k = 1; k < terms.size(); ++k) {
    const std::vector<double>& tv = terms[k].values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tv[i];
  }
  std::vector<detail::TensorNode*> nodes;
  nodes.reserve(terms.size());
  for (const Tensor& t : terms) nodes.push_back(t.node().get());
  return detail::make_op(terms.front().shape(), std::move(out), "add_list", terms,
                         [nodes](const detail::TensorNode& o) {
                           for (detail::TensorNode* p : nodes) {
                             if (!p->requires_grad) continue;
                             for (std::size_t i = 0; i < o.grad.size(); ++i) p->grad[i] += o.grad[i];
                           }
                         });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_defined(a, "matmul");
  detail::check_defined(b, "matmul");
  detail::check_2d(a, "matmul");
  detail::check_2d(b, "matmul");
  const std::int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " + std::to_string(k) +
                                " vs " + std::to_string(k2));
  }
  const std::vector<double>& av = a.values();
  const std::vector<double>& bv = b.values();
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  // Fixed i-k-j order: each output element accumulates over k ascending, so a
  // row's result never depends on which other rows are present.
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double av_ik = av[static_cast<std::size_t>(i * k + kk)];
      if (av_ik == 0.0) continue;
      const std::size_t brow = static_cast<std::size_t>(kk * n);
      const std::size_t orow = static_cast<std::size_t>(i * n);
      for (std::int64_t j = 0; j < n; ++j) {
        out[orow + static_cast<std::size_t>(j)] += av_ik * bv[brow + static_cast<std::size_t>(j)];
      }
    }
  }
  auto* pa = a.node().get();
  auto* pb = b.node().get();
  return detail::make_op(
      {m, n}, std::move(out), "matmul", {a, b}, [pa, pb, m, k, n](const detail::TensorNode& o) {
        if (pa->requires_grad) {
          // dA = dC . B^T
          for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t kk = 0; kk < k; ++kk) {
              double acc = 0.0;
              for (std::int64_t j = 0; j < n; ++j) {
                acc += o.grad[static_cast<std::size_t>(i * n + j)] *
                       pb->values[static_cast<std::size_t>(kk * n + j)];
              }
              pa->grad[static_cast<std::size_t>(i * k + kk)] += acc;
            }
          }
        }
        if (pb->requires_grad) {
          // dB = A^T . dC
          for (std::int64_t i = 0; i < m; ++i) {
            for (std::int64_t kk = 0; kk < k; ++kk) {
              const double av_ik = pa->values[static_cast<std::size_t>(i * k + kk)];
              if (av_ik == 0.0) continue;
              for (std::int64_t j = 0; j < n; ++j) {
                pb->grad[static_cast<std::size_t>(kk * n + j)] +=
                    av_ik * o.grad[static_cast<std::size_t>(i * n + j)];
              }
            }
          }
        }
      });
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& bias) {
  detail::check_defined(x, "add_row_broadcast");
  detail::check_defined(bias, "add_row_broadcast");
  detail::check_2d(x, "add_row_broadcast");
  detail::check_1d(bias, "add_row_broadcast");
  const std::int64_t n = x.dim(0), d = x.dim(1);
  if (bias.dim(0) != d) {
    throw std::invalid_argument("add_row_broadcast: bias length " + std::to_string(bias.dim(0)) +
                                " does not match row width " + std::to_string(d));
  }
  std::vector<double> out(x.values());
  const std::vector<double>& bv = bias.values();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i * d + j)] += bv[static_cast<std::size_t>(j)];
  auto* px = x.node().get();
  auto* pbias = bias.node().get();
  return detail::make_op({n, d}, std::move(out), "add_row_broadcast", {x, bias},
                         [px, pbias, n, d](const detail::TensorNode& o) {
                           if (px->requires_grad)
                             for (std::size_t i = 0; i < o.grad.size(); ++i)
                               px->grad[i] += o.grad[i];
                           if (pbias->requires_grad) {
                             for (std::int64_t j = 0; j < d; ++j) {
                               double acc = 0.0;
                               for (std::int64_t i = 0; i < n; ++i)
                                 acc += o.grad[static_cast<std::size_t>(i * d + j)];
                               pbias->grad[static_cast<std::size_t>(j)] += acc;
                             }
                           }
                         });
}

Tensor sigmoid(const Tensor& x) {
  detail::check_defined(x, "sigmoid");
  std::vector<double> out(x.values().size());
  const std::vector<double>& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  auto* px = x.node().get();
  return detail::make_op(x.shape(), std::move(out), "sigmoid", {x},
                         [px](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i) {
                             const double s = o.values[i];
                             px->grad[i] += o.grad[i] * s * (1.0 - s);
                           }
                         });
}

Tensor tanh(const Tensor& x) {
  detail::check_defined(x, "tanh");
  std::vector<double> out(x.values().size());
  const std::vector<double>& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  auto* px = x.node().get();
  return detail::make_op(x.shape(), std::move(out), "tanh", {x},
                         [px](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i) {
                             const double y = o.values[i];
                             px->grad[i] += o.grad[i] * (1.0 - y * y);
                           }
                         });
}

Tensor relu(const Tensor& x) {
  detail::check_defined(x, "relu");
  std::vector<double> out(x.values().size());
  const std::vector<double>& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  auto* px = x.node().get();
  return detail::make_op(x.shape(), std::move(out), "relu", {x},
                         [px](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i)
                             if (px->values[i] > 0.0) px->grad[i] += o.grad[i];
                         });
}

Tensor exp(const Tensor& x) {
  detail::check_defined(x, "exp");
  std::vector<double> out(x.values().size());
  const std::vector<double>& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
  auto* px = x.node().get();
  return detail::make_op(x.shape(), std::move(out), "exp", {x},
                         [px](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i)
                             px->grad[i] += o.grad[i] * o.values[i];
                         });
}

Tensor log(const Tensor& x) {
  detail::check_defined(x, "log");
  const std::vector<double>& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(xv[i] > 0.0)) {
      throw std::domain_error("log: non-positive input " + std::to_string(xv[i]) +
                              " at flat index " + std::to_string(i));
    }
    out[i] = std::log(xv[i]);
  }
  auto* px = x.node().get();
  return detail::make_op(x.shape(), std::move(out), "log", {x},
                         [px](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i)
                             px->grad[i] += o.grad[i] / px->values[i];
                         });
}

namespace {

// lse over a strided slice: values[offset + t*stride] for t in [0, count).
double lse_slice(const std::vector<double>& v, std::size_t offset, std::size_t stride,
                 std::size_t count) {
  double m = v[offset];
  for (std::size_t t = 1; t < count; ++t) m = std::max(m, v[offset + t * stride]);
  double s = 0.0;
  for (std::size_t t = 0; t < count; ++t) s += std::exp(v[offset + t * stride] - m);
  return m + std::log(s);
}

}  // namespace

Tensor log_sum_exp(const Tensor& x, int axis) {
  detail::check_defined(x, "log_sum_exp");
  if (x.ndim() == 1) {
    if (axis != 0) {
      throw std::invalid_argument("log_sum_exp: axis " + std::to_string(axis) +
                                  " invalid for a 1-D tensor");
    }
    const std::int64_t n = x.dim(0);
    if (n == 0) throw std::invalid_argument("log_sum_exp: empty input");
    const double v = lse_slice(x.values(), 0, 1, static_cast<std::size_t>(n));
    auto* px = x.node().get();
    return detail::make_op({}, {v}, "log_sum_exp", {x}, [px, n](const detail::TensorNode& o) {
      if (!px->requires_grad) return;
      const double out_v = o.values[0];
      const double g = o.grad[0];
      for (std::int64_t i = 0; i < n; ++i) {
        px->grad[static_cast<std::size_t>(i)] +=
            g * std::exp(px->values[static_cast<std::size_t>(i)] - out_v);
      }
    });
  }
  detail::check_2d(x, "log_sum_exp");
  if (axis != 0 && axis != 1) {
    throw std::invalid_argument("log_sum_exp: axis " + std::to_string(axis) +
                                " invalid for a 2-D tensor");
  }
  const std::int64_t m = x.dim(0), n = x.dim(1);
  if (m == 0 || n == 0) throw std::invalid_argument("log_sum_exp: empty input");
  const std::vector<double>& xv = x.values();
  auto* px = x.node().get();
  if (axis == 1) {
    std::vector<double> out(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i)
      out[static_cast<std::size_t>(i)] =
          lse_slice(xv, static_cast<std::size_t>(i * n), 1, static_cast<std::size_t>(n));
    return detail::make_op({m}, std::move(out), "log_sum_exp", {x},
                           [px, m, n](const detail::TensorNode& o) {
                             if (!px->requires_grad) return;
                             for (std::int64_t i = 0; i < m; ++i) {
                               const double out_v = o.values[static_cast<std::size_t>(i)];
                               const double g = o.grad[static_cast<std::size_t>(i)];
                               for (std::int64_t j = 0; j < n; ++j) {
                                 const std::size_t idx = static_cast<std::size_t>(i * n + j);
                                 px->grad[idx] += g * std::exp(px->values[idx] - out_v);
                               }
                             }
                           });
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t j = 0; j < n; ++j)
    out[static_cast<std::size_t>(j)] = lse_slice(xv, static_cast<std::size_t>(j),
                                                 static_cast<std::size_t>(n),
                                                 static_cast<std::size_t>(m));
  return detail::make_op({n}, std::move(out), "log_sum_exp", {x},
                         [px, m, n](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::int64_t j = 0; j < n; ++j) {
                             const double out_v = o.values[static_cast<std::size_t>(j)];
                             const double g = o.grad[static_cast<std::size_t>(j)];
                             for (std::int64_t i = 0; i < m; ++i) {
                               const std::size_t idx = static_cast<std::size_t>(i * n + j);
                               px->grad[idx] += g * std::exp(px->values[idx] - out_v);
                             }
                           }
                         });
}

Tensor softmax_rows(const Tensor& x) {
  detail::check_defined(x, "softmax_rows");
  detail::check_2d(x, "softmax_rows");
  const std::int64_t m = x.dim(0), n = x.dim(1);
  if (n == 0) throw std::invalid_argument("softmax_rows: empty rows");
  const std::vector<double>& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::int64_t i = 0; i < m; ++i) {
    const std::size_t base = static_cast<std::size_t>(i * n);
    double mx = xv[base];
    for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, xv[base + static_cast<std::size_t>(j)]);
    double s = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      const double e = std::exp(xv[base + static_cast<std::size_t>(j)] - mx);
      out[base + static_cast<std::size_t>(j)] = e;
      s += e;
    }
    for (std::int64_t j = 0; j < n; ++j) out[base + static_cast<std::size_t>(j)] /= s;
  }
  auto* px = x.node().get();
  return detail::make_op({m, n}, std::move(out), "softmax_rows", {x},
                         [px, m, n](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::int64_t i = 0; i < m; ++i) {
                             const std::size_t base = static_cast<std::size_t>(i * n);
                             double dot = 0.0;
                             for (std::int64_t j = 0; j < n; ++j) {
                               const std::size_t idx = base + static_cast<std::size_t>(j);
                               dot += o.grad[idx] * o.values[idx];
                             }
                             for (std::int64_t j = 0; j < n; ++j) {
                               const std::size_t idx = base + static_cast<std::size_t>(j);
                               px->grad[idx] += o.values[idx] * (o.grad[idx] - dot);
                             }
                           }
                         });
}

Tensor sum(const Tensor& x) {
  detail::check_defined(x, "sum");
  double s = 0.0;
  for (double v : x.values()) s += v;
  auto* px = x.node().get();
  return detail::make_op({}, {s}, "sum", {x}, [px](const detail::TensorNode& o) {
    if (!px->requires_grad) return;
    const double g = o.grad[0];
    for (double& gv : px->grad) gv += g;
  });
}

// ---- shape manipulation ----

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no parts");
  for (const Tensor& p : parts) detail::check_defined(p, "concat");
  const int rank = parts.front().ndim();
  if (rank != 1 && rank != 2) {
    throw std::invalid_argument("concat: only 1-D and 2-D tensors are supported");
  }
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument("concat: axis " + std::to_string(axis) + " invalid for rank " +
                                std::to_string(rank));
  }
  for (const Tensor& p : parts) {
    if (p.ndim() != rank) throw std::invalid_argument("concat: mixed tensor ranks");
    for (int ax = 0; ax < rank; ++ax) {
      if (ax != axis && p.dim(ax) != parts.front().dim(ax)) {
        throw std::invalid_argument("concat: shapes differ on a non-concatenated axis");
      }
    }
  }
  std::vector<detail::TensorNode*> nodes;
  nodes.reserve(parts.size());
  for (const Tensor& p : parts) nodes.push_back(p.node().get());

  if (rank == 1 || axis == 0) {
    // Row-major layout makes axis-0 concat (and all 1-D concat) a flat append.
    std::int64_t total0 = 0;
    for (const Tensor& p : parts) total0 += p.dim(0);
    Shape shape = parts.front().shape();
    shape[0] = total0;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(detail::shape_size(shape)));
    for (const Tensor& p : parts) {
      const std::vector<double>& pv = p.values();
      out.insert(out.end(), pv.begin(), pv.end());
    }
    return detail::make_op(std::move(shape), std::move(out), "concat", parts,
                           [nodes](const detail::TensorNode& o) {
                             std::size_t offset = 0;
                             for (detail::TensorNode* p : nodes) {
                               const std::size_t n = p->values.size();
                               if (p->requires_grad)
                                 for (std::size_t i = 0; i < n; ++i)
                                   p->grad[i] += o.grad[offset + i];
                               offset += n;
                             }
                           });
  }

  const std::int64_t rows = parts.front().dim(0);
  std::int64_t total_cols = 0;
  std::vector<std::int64_t> widths;
  widths.reserve(parts.size());
  for (const Tensor& p : parts) {
    widths.push_back(p.dim(1));
    total_cols += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(rows * total_cols));
  std::int64_t col0 = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::vector<double>& pv = parts[k].values();
    const std::int64_t w = widths[k];
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < w; ++j)
        out[static_cast<std::size_t>(i * total_cols + col0 + j)] =
            pv[static_cast<std::size_t>(i * w + j)];
    col0 += w;
  }
  return detail::make_op({rows, total_cols}, std::move(out), "concat", parts,
                         [nodes, widths, rows, total_cols](const detail::TensorNode& o) {
                           std::int64_t c0 = 0;
                           for (std::size_t k = 0; k < nodes.size(); ++k) {
                             const std::int64_t w = widths[k];
                             if (nodes[k]->requires_grad) {
                               for (std::int64_t i = 0; i < rows; ++i)
                                 for (std::int64_t j = 0; j < w; ++j)
                                   nodes[k]->grad[static_cast<std::size_t>(i * w + j)] +=
                                       o.grad[static_cast<std::size_t>(i * total_cols + c0 + j)];
                             }
                             c0 += w;
                           }
                         });
}

Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t count) {
  detail::check_defined(x, "slice_cols");
  detail::check_2d(x, "slice_cols");
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  if (start < 0 || count < 0 || start + count > cols) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") outside " +
                                std::to_string(cols) + " columns");
  }
  std::vector<double> out(static_cast<std::size_t>(rows * count));
  const std::vector<double>& xv = x.values();
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < count; ++j)
      out[static_cast<std::size_t>(i * count + j)] =
          xv[static_cast<std::size_t>(i * cols + start + j)];
  auto* px = x.node().get();
  return detail::make_op({rows, count}, std::move(out), "slice_cols", {x},
                         [px, rows, cols, start, count](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::int64_t i = 0; i < rows; ++i)
                             for (std::int64_t j = 0; j < count; ++j)
                               px->grad[static_cast<std::size_t>(i * cols + start + j)] +=
                                   o.grad[static_cast<std::size_t>(i * count + j)];
                         });
}

Tensor slice_rows(const Tensor& x, std::int64_t start, std::int64_t count) {
  detail::check_defined(x, "slice_rows");
  detail::check_2d(x, "slice_rows");
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  if (start < 0 || count < 0 || start + count > rows) {
    throw std::invalid_argument("slice_rows: range [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") outside " +
                                std::to_string(rows) + " rows");
  }
  const std::vector<double>& xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(start * cols),
                          xv.begin() + static_cast<std::ptrdiff_t>((start + count) * cols));
  auto* px = x.node().get();
  return detail::make_op({count, cols}, std::move(out), "slice_rows", {x},
                         [px, cols, start, count](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           const std::size_t base = static_cast<std::size_t>(start * cols);
                           for (std::size_t i = 0; i < static_cast<std::size_t>(count * cols); ++i)
                             px->grad[base + i] += o.grad[i];
                         });
}

Tensor row(const Tensor& x, std::int64_t index) {
  detail::check_defined(x, "row");
  detail::check_2d(x, "row");
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  if (index < 0 || index >= rows) {
    throw std::invalid_argument("row: index " + std::to_string(index) + " outside " +
                                std::to_string(rows) + " rows");
  }
  const std::vector<double>& xv = x.values();
  std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(index * cols),
                          xv.begin() + static_cast<std::ptrdiff_t>((index + 1) * cols));
  auto* px = x.node().get();
  return detail::make_op({cols}, std::move(out), "row", {x},
                         [px, index, cols](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           const std::size_t base = static_cast<std::size_t>(index * cols);
                           for (std::size_t j = 0; j < static_cast<std::size_t>(cols); ++j)
                             px->grad[base + j] += o.grad[j];
                         });
}

Tensor reshape(const Tensor& x, Shape shape) {
  detail::check_defined(x, "reshape");
  if (detail::shape_size(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + std::to_string(x.size()) +
                                " elements as a tensor of " +
                                std::to_string(detail::shape_size(shape)) + " elements");
  }
  auto* px = x.node().get();
  return detail::make_op(std::move(shape), std::vector<double>(x.values()), "reshape", {x},
                         [px](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i) px->grad[i] += o.grad[i];
                         });
}

Tensor transpose(const Tensor& x) {
  detail::check_defined(x, "transpose");
  detail::check_2d(x, "transpose");
  const std::int64_t m = x.dim(0), n = x.dim(1);
  const std::vector<double>& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(m * n));
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(j * m + i)] = xv[static_cast<std::size_t>(i * n + j)];
    }
  }
  auto* px = x.node().get();
  return detail::make_op({n, m}, std::move(out), "transpose", {x},
                         [px, m, n](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::int64_t j = 0; j < n; ++j) {
                             for (std::int64_t i = 0; i < m; ++i) {
                               px->grad[static_cast<std::size_t>(i * n + j)] +=
                                   o.grad[static_cast<std::size_t>(j * m + i)];
                             }
                           }
                         });
}

Tensor select_rows(const Tensor& x, const std::vector<std::int64_t>& indices) {
  detail::check_defined(x, "select_rows");
  detail::check_2d(x, "select_rows");
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  for (std::int64_t idx : indices) {
    if (idx < 0 || idx >= rows) {
      throw std::invalid_argument("select_rows: index " + std::to_string(idx) + " outside " +
                                  std::to_string(rows) + " rows");
    }
  }
  const std::vector<double>& xv = x.values();
  std::vector<double> out(indices.size() * static_cast<std::size_t>(cols));
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t src = static_cast<std::size_t>(indices[r] * cols);
    std::copy(xv.begin() + static_cast<std::ptrdiff_t>(src),
              xv.begin() + static_cast<std::ptrdiff_t>(src + static_cast<std::size_t>(cols)),
              out.begin() + static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(cols)));
  }
  auto* px = x.node().get();
  return detail::make_op({static_cast<std::int64_t>(indices.size()), cols}, std::move(out),
                         "select_rows", {x},
                         [px, indices, cols](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           // Repeated indices accumulate, in ascending output-row order.
                           for (std::size_t r = 0; r < indices.size(); ++r) {
                             const std::size_t dst = static_cast<std::size_t>(indices[r] * cols);
                             const std::size_t src = r * static_cast<std::size_t>(cols);
                             for (std::size_t j = 0; j < static_cast<std::size_t>(cols); ++j)
                               px->grad[dst + j] += o.grad[src + j];
                           }
                         });
}

Tensor scatter_rows(const Tensor& x, const std::vector<std::int64_t>& indices,
                    std::int64_t total_rows) {
  detail::check_defined(x, "scatter_rows");
  detail::check_2d(x, "scatter_rows");
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  if (static_cast<std::int64_t>(indices.size()) != rows) {
    throw std::invalid_argument("scatter_rows: " + std::to_string(indices.size()) +
                                " indices for " + std::to_string(rows) + " rows");
  }
  std::vector<bool> seen(static_cast<std::size_t>(total_rows), false);
  for (std::int64_t idx : indices) {
    if (idx < 0 || idx >= total_rows) {
      throw std::invalid_argument("scatter_rows: index " + std::to_string(idx) + " outside " +
                                  std::to_string(total_rows) + " rows");
    }
    if (seen[static_cast<std::size_t>(idx)]) {
      throw std::invalid_argument("scatter_rows: duplicate index " + std::to_string(idx));
    }
    seen[static_cast<std::size_t>(idx)] = true;
  }
  const std::vector<double>& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(total_rows * cols), 0.0);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t dst = static_cast<std::size_t>(indices[r] * cols);
    const std::size_t src = r * static_cast<std::size_t>(cols);
    std::copy(xv.begin() + static_cast<std::ptrdiff_t>(src),
              xv.begin() + static_cast<std::ptrdiff_t>(src + static_cast<std::size_t>(cols)),
              out.begin() + static_cast<std::ptrdiff_t>(dst));
  }
  auto* px = x.node().get();
  return detail::make_op({total_rows, cols}, std::move(out), "scatter_rows", {x},
                         [px, indices, cols](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::size_t r = 0; r < indices.size(); ++r) {
                             const std::size_t src = static_cast<std::size_t>(indices[r] * cols);
                             const std::size_t dst = r * static_cast<std::size_t>(cols);
                             for (std::size_t j = 0; j < static_cast<std::size_t>(cols); ++j)
                               px->grad[dst + j] += o.grad[src + j];
                           }
                         });
}

Tensor gather_elements(const Tensor& x, const std::vector<std::int64_t>& indices) {
  detail::check_defined(x, "gather_elements");
  const std::int64_t n = x.size();
  for (std::int64_t idx : indices) {
    if (idx < 0 || idx >= n) {
      throw std::invalid_argument("gather_elements: flat index " + std::to_string(idx) +
                                  " outside " + std::to_string(n) + " elements");
    }
  }
  const std::vector<double>& xv = x.values();
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    out[i] = xv[static_cast<std::size_t>(indices[i])];
  auto* px = x.node().get();
  return detail::make_op({static_cast<std::int64_t>(indices.size())}, std::move(out),
                         "gather_elements", {x},
                         [px, indices](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::size_t i = 0; i < indices.size(); ++i)
                             px->grad[static_cast<std::size_t>(indices[i])] += o.grad[i];
                         });
}

Tensor mask_rows(const Tensor& x, const std::vector<std::uint8_t>& keep) {
  detail::check_defined(x, "mask_rows");
  detail::check_2d(x, "mask_rows");
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  if (static_cast<std::int64_t>(keep.size()) != rows) {
    throw std::invalid_argument("mask_rows: " + std::to_string(keep.size()) + " flags for " +
                                std::to_string(rows) + " rows");
  }
  std::vector<double> out(x.values());
  for (std::int64_t i = 0; i < rows; ++i) {
    if (keep[static_cast<std::size_t>(i)]) continue;
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(i * cols),
              out.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols), 0.0);
  }
  auto* px = x.node().get();
  return detail::make_op({rows, cols}, std::move(out), "mask_rows", {x},
                         [px, keep, cols](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::size_t i = 0; i < keep.size(); ++i) {
                             if (!keep[i]) continue;
                             const std::size_t base = i * static_cast<std::size_t>(cols);
                             for (std::size_t j = 0; j < static_cast<std::size_t>(cols); ++j)
                               px->grad[base + j] += o.grad[base + j];
                           }
                         });
}

// ---- neural-network primitives ----

Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& indices) {
  detail::check_defined(table, "embedding_lookup");
  detail::check_2d(table, "embedding_lookup");
  const std::int64_t vocab = table.dim(0);
  for (std::int64_t idx : indices) {
    if (idx < 0 || idx >= vocab) {
      throw std::invalid_argument("embedding_lookup: index " + std::to_string(idx) +
                                  " outside vocabulary of " + std::to_string(vocab) + " rows");
    }
  }
  return select_rows(table, indices);
}

Tensor max_over_time(const Tensor& x) {
  detail::check_defined(x, "max_over_time");
  detail::check_2d(x, "max_over_time");
  const std::int64_t t_len = x.dim(0), d = x.dim(1);
  if (t_len == 0) throw std::invalid_argument("max_over_time: empty time axis");
  const std::vector<double>& xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(d));
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(d), 0);
  for (std::int64_t j = 0; j < d; ++j) {
    double best = xv[static_cast<std::size_t>(j)];
    std::int64_t best_t = 0;
    for (std::int64_t t = 1; t < t_len; ++t) {
      const double v = xv[static_cast<std::size_t>(t * d + j)];
      if (v > best) {  // strict: ties keep the earliest position
        best = v;
        best_t = t;
      }
    }
    out[static_cast<std::size_t>(j)] = best;
    argmax[static_cast<std::size_t>(j)] = best_t;
  }
  auto* px = x.node().get();
  return detail::make_op({d}, std::move(out), "max_over_time", {x},
                         [px, argmax, d](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::int64_t j = 0; j < d; ++j)
                             px->grad[static_cast<std::size_t>(
                                 argmax[static_cast<std::size_t>(j)] * d + j)] +=
                                 o.grad[static_cast<std::size_t>(j)];
                         });
}

Tensor dropout(const Tensor& x, double rate, bool train_mode, Rng& rng) {
  detail::check_defined(x, "dropout");
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate " + std::to_string(rate) +
                                " outside [0, 1)");
  }
  if (!train_mode || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  const std::vector<double>& xv = x.values();
  std::vector<double> mask(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = rng.next_double() < rate ? 0.0 : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  auto* px = x.node().get();
  return detail::make_op(x.shape(), std::move(out), "dropout", {x},
                         [px, mask](const detail::TensorNode& o) {
                           if (!px->requires_grad) return;
                           for (std::size_t i = 0; i < o.grad.size(); ++i)
                             px->grad[i] += o.grad[i] * mask[i];
                         });
}

Tensor conv1d_same(const Tensor& x, const Tensor& weight, const Tensor& bias, int window) {
  detail::check_defined(x, "conv1d_same");
  detail::check_defined(weight, "conv1d_same");
  detail::check_defined(bias, "conv1d_same");
  detail::check_2d(x, "conv1d_same");
  detail::check_2d(weight, "conv1d_same");
  detail::check_1d(bias, "conv1d_same");
  if (window <= 0 || window % 2 == 0) {
    throw std::invalid_argument("conv1d_same: window " + std::to_string(window) +
                                " must be odd and positive");
  }
  const std::int64_t t_len = x.dim(0), din = x.dim(1);
  const std::int64_t dout = bias.dim(0);
  if (weight.dim(0) != window * din || weight.dim(1) != dout) {
    throw std::invalid_argument("conv1d_same: weight shape [" + std::to_string(weight.dim(0)) +
                                "," + std::to_string(weight.dim(1)) + "] does not match window " +
                                std::to_string(window) + " x input width " + std::to_string(din) +
                                " -> output width " + std::to_string(dout));
  }
  const std::int64_t half = window / 2;
  const std::vector<double>& xv = x.values();
  const std::vector<double>& wv = weight.values();
  const std::vector<double>& bv = bias.values();
  std::vector<double> out(static_cast<std::size_t>(t_len * dout));
  // Fixed accumulation order (bias, then window offset, then input channel) so
  // results do not depend on surrounding padding.
  for (std::int64_t t = 0; t < t_len; ++t) {
    const std::size_t obase = static_cast<std::size_t>(t * dout);
    for (std::int64_t o = 0; o < dout; ++o) out[obase + static_cast<std::size_t>(o)] = bv[static_cast<std::size_t>(o)];
    for (std::int64_t k = 0; k < window; ++k) {
      const std::int64_t src = t + k - half;
      if (src < 0 || src >= t_len) continue;
      for (std::int64_t c = 0; c < din; ++c) {
        const double xvv = xv[static_cast<std::size_t>(src * din + c)];
        if (xvv == 0.0) continue;
        const std::size_t wbase = static_cast<std::size_t>((k * din + c) * dout);
        for (std::int64_t o = 0; o < dout; ++o)
          out[obase + static_cast<std::size_t>(o)] += xvv * wv[wbase + static_cast<std::size_t>(o)];
      }
    }
  }
  auto* px = x.node().get();
  auto* pw = weight.node().get();
  auto* pb = bias.node().get();
  return detail::make_op(
      {t_len, dout}, std::move(out), "conv1d_same", {x, weight, bias},
      [px, pw, pb, t_len, din, dout, window, half](const detail::TensorNode& o) {
        for (std::int64_t t = 0; t < t_len; ++t) {
          const std::size_t obase = static_cast<std::size_t>(t * dout);
          if (pb->requires_grad) {
            for (std::int64_t oc = 0; oc < dout; ++oc)
              pb->grad[static_cast<std::size_t>(oc)] += o.grad[obase + static_cast<std::size_t>(oc)];
          }
          for (std::int64_t k = 0; k < window; ++k) {
            const std::int64_t src = t + k - half;
            if (src < 0 || src >= t_len) continue;
            for (std::int64_t c = 0; c < din; ++c) {
              const std::size_t xi = static_cast<std::size_t>(src * din + c);
              const std::size_t wbase = static_cast<std::size_t>((k * din + c) * dout);
              if (px->requires_grad) {
                double acc = 0.0;
                for (std::int64_t oc = 0; oc < dout; ++oc)
                  acc += o.grad[obase + static_cast<std::size_t>(oc)] *
                         pw->values[wbase + static_cast<std::size_t>(oc)];
                px->grad[xi] += acc;
              }
              if (pw->requires_grad) {
                const double xvv = px->values[xi];
                if (xvv != 0.0) {
                  for (std::int64_t oc = 0; oc < dout; ++oc)
                    pw->grad[wbase + static_cast<std::size_t>(oc)] +=
                        xvv * o.grad[obase + static_cast<std::size_t>(oc)];
                }
              }
            }
          }
        }
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, double momentum, double eps, bool train_mode) {
  detail::check_defined(x, "batch_norm");
  detail::check_defined(gamma, "batch_norm");
  detail::check_defined(beta, "batch_norm");
  detail::check_defined(stats.running_mean, "batch_norm");
  detail::check_defined(stats.running_var, "batch_norm");
  detail::check_2d(x, "batch_norm");
  detail::check_1d(gamma, "batch_norm");
  detail::check_1d(beta, "batch_norm");
  detail::check_1d(stats.running_mean, "batch_norm");
  detail::check_1d(stats.running_var, "batch_norm");
  const std::int64_t n = x.dim(0), d = x.dim(1);
  if (gamma.dim(0) != d || beta.dim(0) != d || stats.running_mean.dim(0) != d ||
      stats.running_var.dim(0) != d) {
    throw std::invalid_argument("batch_norm: parameter widths do not match feature width " +
                                std::to_string(d));
  }
  if (stats.running_mean.requires_grad() || stats.running_var.requires_grad()) {
    throw std::invalid_argument("batch_norm: running statistics must not track gradients");
  }
  const std::vector<double>& xv = x.values();
  const std::vector<double>& gv = gamma.values();
  const std::vector<double>& bv = beta.values();
  auto* px = x.node().get();
  auto* pg = gamma.node().get();
  auto* pbeta = beta.node().get();

  if (!train_mode) {
    std::vector<double> mean(stats.running_mean.values());
    std::vector<double> inv_std(static_cast<std::size_t>(d));
    for (std::int64_t j = 0; j < d; ++j)
      inv_std[static_cast<std::size_t>(j)] =
          1.0 / std::sqrt(stats.running_var.values()[static_cast<std::size_t>(j)] + eps);
    std::vector<double> out(static_cast<std::size_t>(n * d));
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < d; ++j) {
        const std::size_t idx = static_cast<std::size_t>(i * d + j);
        const std::size_t jj = static_cast<std::size_t>(j);
        out[idx] = gv[jj] * (xv[idx] - mean[jj]) * inv_std[jj] + bv[jj];
      }
    }
    return detail::make_op(
        {n, d}, std::move(out), "batch_norm", {x, gamma, beta},
        [px, pg, pbeta, mean, inv_std, n, d](const detail::TensorNode& o) {
          for (std::int64_t j = 0; j < d; ++j) {
            const std::size_t jj = static_cast<std::size_t>(j);
            double dg = 0.0, db = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
              const std::size_t idx = static_cast<std::size_t>(i * d + j);
              const double g = o.grad[idx];
              const double xhat = (px->values[idx] - mean[jj]) * inv_std[jj];
              dg += g * xhat;
              db += g;
              if (px->requires_grad) px->grad[idx] += g * pg->values[jj] * inv_std[jj];
            }
            if (pg->requires_grad) pg->grad[jj] += dg;
            if (pbeta->requires_grad) pbeta->grad[jj] += db;
          }
        });
  }

  if (n < 2) {
    throw std::invalid_argument("batch_norm: training mode needs at least 2 rows, got " +
                                std::to_string(n));
  }
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  std::vector<double> var(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t j = 0; j < d; ++j) {
    const std::size_t jj = static_cast<std::size_t>(j);
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += xv[static_cast<std::size_t>(i * d + j)];
    mean[jj] = s / static_cast<double>(n);
    double sq = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const double c = xv[static_cast<std::size_t>(i * d + j)] - mean[jj];
      sq += c * c;
    }
    var[jj] = sq / static_cast<double>(n);  // biased, used for normalization
  }
  // Running buffers keep the unbiased estimate, matching the usual convention.
  std::vector<double>& rm = stats.running_mean.mutable_values();
  std::vector<double>& rv = stats.running_var.mutable_values();
  const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
  for (std::int64_t j = 0; j < d; ++j) {
    const std::size_t jj = static_cast<std::size_t>(j);
    rm[jj] = (1.0 - momentum) * rm[jj] + momentum * mean[jj];
    rv[jj] = (1.0 - momentum) * rv[jj] + momentum * var[jj] * unbias;
  }
  std::vector<double> inv_std(static_cast<std::size_t>(d));
  for (std::int64_t j = 0; j < d; ++j)
    inv_std[static_cast<std::size_t>(j)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(j)] + eps);
  std::vector<double> out(static_cast<std::size_t>(n * d));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < d; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i * d + j);
      const std::size_t jj = static_cast<std::size_t>(j);
      out[idx] = gv[jj] * (xv[idx] - mean[jj]) * inv_std[jj] + bv[jj];
    }
  }
  return detail::make_op(
      {n, d}, std::move(out), "batch_norm", {x, gamma, beta},
      [px, pg, pbeta, mean, inv_std, n, d](const detail::TensorNode& o) {
        const double dn = static_cast<double>(n);
        for (std::int64_t j = 0; j < d; ++j) {
          const std::size_t jj = static_cast<std::size_t>(j);
          const double s = inv_std[jj];
          double dg = 0.0, db = 0.0, dxhat_sum = 0.0, dxhat_center = 0.0, center_sum = 0.0;
          for (std::int64_t i = 0; i < n; ++i) {
            const std::size_t idx = static_cast<std::size_t>(i * d + j);
            const double g = o.grad[idx];
            const double center = px->values[idx] - mean[jj];
            const double dxhat = g * pg->values[jj];
            dg += g * center * s;
            db += g;
            dxhat_sum += dxhat;
            dxhat_center += dxhat * center;
            center_sum += center;
          }
          if (pg->requires_grad) pg->grad[jj] += dg;
          if (pbeta->requires_grad) pbeta->grad[jj] += db;
          if (!px->requires_grad) continue;
          const double dvar = dxhat_center * (-0.5) * s * s * s;
          const double dmean = -s * dxhat_sum + dvar * (-2.0 / dn) * center_sum;
          for (std::int64_t i = 0; i < n; ++i) {
            const std::size_t idx = static_cast<std::size_t>(i * d + j);
            const double g = o.grad[idx];
            const double center = px->values[idx] - mean[jj];
            px->grad[idx] += g * pg->values[jj] * s + dvar * 2.0 * center / dn + dmean / dn;
          }
        }
      });
}

}  // namespace seqlab
