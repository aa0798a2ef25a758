/* Copyright 2026 The TReID Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef TREID_TENSOR_HPP_
#define TREID_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "treid/error.hpp"

namespace treid {

// Dimension sizes, row-major storage order. Image tensors are channels-last
// [H, W, C]; sequences put time first [T, ...]. Rank 0 denotes a scalar.
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);
bool shape_eq(const Shape& a, const Shape& b);

template <typename T>
struct TensorData {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // same length as value whenever requires_grad
  bool requires_grad = false;
};

// Dense n-dimensional real tensor. A Tensor is a cheap handle onto shared
// storage: copies alias the same value/grad buffers. Gradients accumulate in
// place and are owned by the tensor, not by the tape that produced them.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> data,
                     bool requires_grad = false);
  static Tensor scalar(T v, bool requires_grad = false);  // rank 0

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t size() const { return d_->value.size(); }

  std::span<T> value() { return d_->value; }
  std::span<const T> value() const { return d_->value; }
  std::span<T> grad();
  std::span<const T> grad() const;

  bool requires_grad() const { return d_ && d_->requires_grad; }
  void set_requires_grad(bool on);
  void zero_grad();

  // Value of a one-element tensor.
  T item() const;

  const std::shared_ptr<TensorData<T>>& node() const { return d_; }

  // Identity comparison (same storage).
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData<T>> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData<T>> d_;
};

// Reverse-mode tape. Operations append nodes in execution order; backward()
// replays them once in reverse, which is a reverse topological order of the
// recorded graph. Construction and backward are single-threaded per step;
// separate tapes on separate threads do not share state.
template <typename T>
class Tape {
 public:
  using NodeFn = std::function<void()>;

  void record(std::vector<std::shared_ptr<TensorData<T>>> outputs, NodeFn fn) {
    nodes_.push_back(Node{std::move(outputs), std::move(fn)});
  }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // requires_grad tensor reachable from loss. Gradients of recorded
  // intermediate outputs are reset before the sweep; leaf gradients

  // accumulate across calls until explicitly zeroed.
  void backward(const Tensor<T>& loss);

  void clear() { nodes_.clear(); }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<std::shared_ptr<TensorData<T>>> outputs;
    NodeFn fn;
  };
  std::vector<Node> nodes_;
};

namespace ops {

// All operations share the convention: `tape` may be null, in which case no
// node is recorded and the result does not require gradients (inference).

template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

// Cross-correlation with zero padding. input [H,W,Cin], kernel
// [kH,kW,Cin,Cout] -> [H',W',Cout] with H' = (H + 2p - kH)/stride + 1.
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& kernel,
                 std::size_t stride, std::size_t padding);

// 2x2 max pooling with stride 2; spatial dims must be even.
template <typename T>
Tensor<T> maxpool2(Tape<T>* tape, const Tensor<T>& input);

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(Tape<T>* tape, const Tensor<T>& x);
// Gradient at exactly 0 is defined as 0.
template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x);

// x * c for a compile-time-known constant c.
template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T c);

// Broadcast a rank-0 tensor over x: x * s and x + s.
template <typename T>
Tensor<T> mul_scalar(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s);
template <typename T>
Tensor<T> add_scalar(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s);

// Arithmetic mean along `axis`; the axis is dropped from the output shape.
template <typename T>
Tensor<T> reduce_mean(Tape<T>* tape, const Tensor<T>& x, std::size_t axis);

template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape);

// Slice index i along axis 0: rank n -> rank n-1.
template <typename T>
Tensor<T> select0(Tape<T>* tape, const Tensor<T>& x, std::size_t i);

// Contiguous slice of a rank-1 tensor.
template <typename T>
Tensor<T> slice1d(Tape<T>* tape, const Tensor<T>& x, std::size_t begin,
                  std::size_t len);

// Concatenate rank-1 tensors.
template <typename T>
Tensor<T> concat1d(Tape<T>* tape, const std::vector<Tensor<T>>& parts);

// Stack equal-shape tensors along a new leading axis.
template <typename T>
Tensor<T> stack0(Tape<T>* tape, const std::vector<Tensor<T>>& parts);

// Sum of all elements -> rank-0.
template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x);

// x[H,W,C] + b[C], broadcast over spatial positions.
template <typename T>
Tensor<T> bias_add_hwc(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& b);

}  // namespace ops

// Central finite differences of a scalar-valued function against the
// analytic gradient produced by the tape. `f` must be a pure function of
// `point` (plus captured constants); it is called with a live tape once for
// the analytic gradient and with a null tape for the probing evaluations.
// Returns the max relative deviation over coordinates, falling back to the
// absolute deviation where both magnitudes are below 1e-8.
template <typename T>
struct FdReport {
  T max_err = 0;
  std::size_t worst_index = 0;
  T analytic_at_worst = 0;
  T numeric_at_worst = 0;
};

template <typename T>
FdReport<T> finite_difference_check(
    const std::function<Tensor<T>(Tape<T>*, const Tensor<T>&)>& f,
    const Tensor<T>& point, T step);

// Relative deviation with absolute fallback below magnitude 1e-8.
template <typename T>
T relative_error(T analytic, T numeric);

}  // namespace treid

#endif  // TREID_TENSOR_HPP_
