#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "seqlab/rng.hpp"

namespace seqlab {

using Shape = std::vector<std::int64_t>;

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // sized lazily, only while gradients flow
  bool requires_grad = false;
  const char* op = "";
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grad buffers.
  std::function<void(const TensorNode&)> backprop;

  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
  void ensure_grad();
  void accumulate_grad(const std::vector<double>& g);
};

bool grad_enabled();

}  // namespace detail

// Disables graph construction in scope (evaluation / decoding paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major tensor of 64-bit floats with reverse-mode gradients.
// Value-semantic handle onto a shared node; operations build a tape when any
// input requires gradients and gradient mode is enabled.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor constant(Shape shape, double value, bool requires_grad = false);
  // Uniform draws from [low, high).
  static Tensor uniform(Shape shape, double low, double high, Rng& rng,
                        bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int ndim() const { return static_cast<int>(shape().size()); }
  std::int64_t dim(int axis) const;
  std::int64_t size() const;
  const std::vector<double>& values() const;
  // Direct access for leaf mutation (optimizer updates, buffer maintenance).
  std::vector<double>& mutable_values();
  double item() const;  // requires size() == 1
  double at(std::int64_t flat_index) const;

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;
  // Writable gradient buffer (sized and zeroed on first use); optimizers use
  // this for in-place clipping.
  std::vector<double>& mutable_grad();
  void zero_grad();

  // Reverse-mode sweep from a scalar; gradients accumulate until zeroed.
  void backward() const;

  // Throws if any value is non-finite; `what` names the offender in the message.
  void check_finite(const std::string& what) const;

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// ---- elementwise and linear algebra ----

Tensor add(const Tensor& a, const Tensor& b);           // same shape
Tensor sub(const Tensor& a, const Tensor& b);           // same shape
Tensor mul(const Tensor& a, const Tensor& b);           // Hadamard
Tensor scale(const Tensor& a, double c);
Tensor add_list(const std::vector<Tensor>& terms);      // elementwise sum
Tensor matmul(const Tensor& a, const Tensor& b);        // [m,k] x [k,n]
// x[N,d] + row broadcast of bias[d].
Tensor add_row_broadcast(const Tensor& x, const Tensor& bias);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // requires strictly positive inputs

// Max-shifted log(sum(exp .)) reduction along `axis`; result drops that axis.
// Supports 1-D (axis 0 -> scalar) and 2-D inputs.
Tensor log_sum_exp(const Tensor& x, int axis);
Tensor softmax_rows(const Tensor& x);  // [m,n] row-wise softmax
Tensor sum(const Tensor& x);           // total sum -> scalar

// ---- shape manipulation ----

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice_cols(const Tensor& x, std::int64_t start, std::int64_t count);
Tensor slice_rows(const Tensor& x, std::int64_t start, std::int64_t count);
Tensor row(const Tensor& x, std::int64_t index);  // [T,d] -> [d]
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // [m,n] -> [n,m]

// Gather of whole rows; repeated indices accumulate on the backward pass.
Tensor select_rows(const Tensor& x, const std::vector<std::int64_t>& indices);
// Inverse placement: rows of x land at `indices` within a [total, d] output,
// all other rows zero. Indices must be unique.
Tensor scatter_rows(const Tensor& x, const std::vector<std::int64_t>& indices,
                    std::int64_t total_rows);
// Gather of individual elements by flat index; scatter-add backward.
Tensor gather_elements(const Tensor& x, const std::vector<std::int64_t>& indices);
// Zeroes rows where keep[i] is false; gradient masked the same way.
Tensor mask_rows(const Tensor& x, const std::vector<std::uint8_t>& keep);

// ---- neural-network primitives ----

// Embedding row gather with index validation against the table size.
Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& indices);

// Per-channel max over the time axis of x[T,d]; ties route the gradient to
// the first (lowest t) occurrence.
Tensor max_over_time(const Tensor& x);

// Inverted dropout: train mode zeroes each element with probability `rate`
// and scales survivors by 1/(1-rate); eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, bool train_mode, Rng& rng);

// Same-padded 1-D convolution along the rows of x[T,din] with a window-kernel
// weight[window*din, dout] and bias[dout]; output is [T,dout].
Tensor conv1d_same(const Tensor& x, const Tensor& weight, const Tensor& bias,
                   int window);

struct BatchNormStats {
  Tensor running_mean;  // [d]
  Tensor running_var;   // [d]
};

// Batch normalization over rows of x[N,d]. Train mode normalizes by batch
// statistics and updates the running stats in place (momentum convention:
// running = (1-m)*running + m*batch, unbiased batch variance for the running
// buffer); eval mode normalizes by the running stats. Train mode needs N >= 2.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, double momentum, double eps,
                  bool train_mode);

namespace detail {
Tensor make_op(Shape shape, std::vector<double> values, const char* op,
               std::vector<Tensor> inputs,
               std::function<void(const TensorNode&)> backprop);
}

}  // namespace seqlab
