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
#include "treid/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace treid {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

namespace {

void check_positive_dims(const Shape& s) {
  for (std::size_t d : s) {
    if (d == 0) throw DimError("zero-sized dimension in shape " + shape_str(s));
  }
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  check_positive_dims(shape);
  auto d = std::make_shared<TensorData<T>>();
  d->shape = std::move(shape);
  d->value.assign(shape_size(d->shape), T(0));
  if (requires_grad) {
    d->requires_grad = true;
    d->grad.assign(d->value.size(), T(0));
  }
  return Tensor<T>(std::move(d));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T v, bool requires_grad) {
  Tensor<T> t = zeros(std::move(shape), requires_grad);
  std::fill(t.value().begin(), t.value().end(), v);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> data,
                          bool requires_grad) {
  check_positive_dims(shape);
  if (shape_size(shape) != data.size()) {
    throw DimError("data length " + std::to_string(data.size()) +
                   " does not match shape " + shape_str(shape));
  }
  auto d = std::make_shared<TensorData<T>>();
  d->shape = std::move(shape);
  d->value = std::move(data);
  if (requires_grad) {
    d->requires_grad = true;
    d->grad.assign(d->value.size(), T(0));
  }
  return Tensor<T>(std::move(d));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v, bool requires_grad) {
  return from({}, {v}, requires_grad);
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (!requires_grad()) {
    throw ContractError("grad() on a tensor that does not require gradients");
  }
  return d_->grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!requires_grad()) {
    throw ContractError("grad() on a tensor that does not require gradients");
  }
  return d_->grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  d_->requires_grad = on;
  if (on && d_->grad.size() != d_->value.size()) {
    d_->grad.assign(d_->value.size(), T(0));
  }
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (requires_grad()) std::fill(d_->grad.begin(), d_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (!d_ || d_->value.size() != 1) {
    throw ContractError("item() requires a one-element tensor, got shape " +
                        (d_ ? shape_str(d_->shape) : std::string("<null>")));
  }
  return d_->value[0];
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape())
                                        : std::string("<null>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() on a loss with no recorded graph");
  }
  // Intermediate (recorded) outputs start every sweep from zero; leaves are
  // never recorded as outputs, so their gradients accumulate across calls.
  for (Node& n : nodes_) {
    for (auto& out : n.outputs) {
      if (out->requires_grad) std::fill(out->grad.begin(), out->grad.end(), T(0));
    }
  }
  loss.node()->grad[0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->fn();
  }
}

namespace detail {

// C[M,N] (+)= op(A) * op(B). The one dense kernel everything else routes
// through; Eigen maps avoid copies.
template <typename T>
void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
          std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
  using Mat =
      Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<Mat>;
  using Map = Eigen::Map<const Mat>;
  CMap C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  Map A(a, static_cast<Eigen::Index>(trans_a ? k : m),
        static_cast<Eigen::Index>(trans_a ? m : k));
  Map B(b, static_cast<Eigen::Index>(trans_b ? n : k),
        static_cast<Eigen::Index>(trans_b ? k : n));
  if (trans_a && trans_b) {
    if (accumulate) C.noalias() += A.transpose() * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  } else if (trans_a) {
    if (accumulate) C.noalias() += A.transpose() * B;
    else C.noalias() = A.transpose() * B;
  } else if (trans_b) {
    if (accumulate) C.noalias() += A * B.transpose();
    else C.noalias() = A * B.transpose();
  } else {
    if (accumulate) C.noalias() += A * B;
    else C.noalias() = A * B;
  }
}

template void gemm<float>(const float*, const float*, float*, std::size_t,
                          std::size_t, std::size_t, bool, bool, bool);
template void gemm<double>(const double*, const double*, double*, std::size_t,
                           std::size_t, std::size_t, bool, bool, bool);

}  // namespace detail

namespace ops {

namespace {

template <typename T>
bool want_grad(Tape<T>* tape, std::initializer_list<Tensor<T>> ins) {
  if (!tape) return false;
  for (const auto& t : ins) {
    if (t.requires_grad()) return true;
  }
  return false;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                      const char* what) {
  if (!shape_eq(a.shape(), b.shape())) {
    throw DimError(std::string(what) + ": shape mismatch " +
                   shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimError("matmul: incompatible shapes " + shape_str(a.shape()) +
                   " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  bool track = want_grad(tape, {a, b});
  Tensor<T> out = Tensor<T>::zeros({m, n}, track);
  detail::gemm(a.value().data(), b.value().data(), out.value().data(), m, k, n,
               false, false, false);
  if (track) {
    tape->record({out.node()}, [a, b, out, m, k, n]() {
      if (a.requires_grad()) {
        detail::gemm(out.node()->grad.data(), b.value().data(),
                     a.node()->grad.data(), m, n, k, false, true, true);
      }
      if (b.requires_grad()) {
        detail::gemm(a.value().data(), out.node()->grad.data(),
                     b.node()->grad.data(), k, m, n, true, false, true);
      }
    });
  }
  return out;
}

namespace {

// Gathers conv patches into a [H'*W', kH*kW*Cin] matrix (zero padding).
template <typename T>
void im2col(const T* x, std::size_t h, std::size_t w, std::size_t cin,
            std::size_t kh, std::size_t kw, std::size_t stride,
            std::size_t pad, std::size_t oh, std::size_t ow, T* cols) {
  const std::size_t row_len = kh * kw * cin;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      T* row = cols + (oy * ow + ox) * row_len;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy =
            static_cast<std::ptrdiff_t>(oy * stride + ky) -
            static_cast<std::ptrdiff_t>(pad);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * stride + kx) -
              static_cast<std::ptrdiff_t>(pad);
          T* dst = row + (ky * kw + kx) * cin;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix < 0 ||
              ix >= static_cast<std::ptrdiff_t>(w)) {
            std::fill(dst, dst + cin, T(0));
          } else {
            const T* src = x + (static_cast<std::size_t>(iy) * w +
                                static_cast<std::size_t>(ix)) *
                                   cin;
            std::copy(src, src + cin, dst);
          }
        }
      }
    }
  }
}

// Scatter-adds column gradients back into the input gradient.
template <typename T>
void col2im_add(const T* cols, std::size_t h, std::size_t w, std::size_t cin,
                std::size_t kh, std::size_t kw, std::size_t stride,
                std::size_t pad, std::size_t oh, std::size_t ow, T* dx) {
  const std::size_t row_len = kh * kw * cin;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const T* row = cols + (oy * ow + ox) * row_len;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy =
            static_cast<std::ptrdiff_t>(oy * stride + ky) -
            static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * stride + kx) -
              static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const T* src = row + (ky * kw + kx) * cin;
          T* dst = dx + (static_cast<std::size_t>(iy) * w +
                         static_cast<std::size_t>(ix)) *
                            cin;
          for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& kernel,
                 std::size_t stride, std::size_t padding) {
  if (input.rank() != 3 || kernel.rank() != 4) {
    throw DimError("conv2d: expected input [H,W,Cin] and kernel "
                   "[kH,kW,Cin,Cout], got " +
                   shape_str(input.shape()) + " and " +
                   shape_str(kernel.shape()));
  }
  const std::size_t h = input.shape()[0], w = input.shape()[1],
                    cin = input.shape()[2];
  const std::size_t kh = kernel.shape()[0], kw = kernel.shape()[1],
                    kcin = kernel.shape()[2], cout = kernel.shape()[3];
  if (kcin != cin) {
    throw DimError("conv2d: input channels " + std::to_string(cin) +
                   " vs kernel channels " + std::to_string(kcin));
  }
  if (stride == 0) throw DimError("conv2d: stride must be positive");
  const std::ptrdiff_t oh_s =
      (static_cast<std::ptrdiff_t>(h + 2 * padding) -
       static_cast<std::ptrdiff_t>(kh)) /
          static_cast<std::ptrdiff_t>(stride) +
      1;
  const std::ptrdiff_t ow_s =
      (static_cast<std::ptrdiff_t>(w + 2 * padding) -
       static_cast<std::ptrdiff_t>(kw)) /
          static_cast<std::ptrdiff_t>(stride) +
      1;
  if (oh_s < 1 || ow_s < 1 ||
      h + 2 * padding < kh || w + 2 * padding < kw) {
    throw DimError("conv2d: nonpositive output size for input " +
                   shape_str(input.shape()) + ", kernel " +
                   shape_str(kernel.shape()) + ", stride " +
                   std::to_string(stride) + ", padding " +
                   std::to_string(padding));
  }
  const std::size_t oh = static_cast<std::size_t>(oh_s),
                    ow = static_cast<std::size_t>(ow_s);
  const std::size_t row_len = kh * kw * cin;

  auto cols = std::make_shared<std::vector<T>>(oh * ow * row_len);
  im2col(input.value().data(), h, w, cin, kh, kw, stride, padding, oh, ow,
         cols->data());

  bool track = want_grad(tape, {input, kernel});
  Tensor<T> out = Tensor<T>::zeros({oh, ow, cout}, track);
  // [oh*ow, row_len] x [row_len, cout]
  detail::gemm(cols->data(), kernel.value().data(), out.value().data(),
               oh * ow, row_len, cout, false, false, false);

  if (track) {
    tape->record({out.node()}, [input, kernel, out, cols, h, w, cin, kh, kw,
                                stride, padding, oh, ow, row_len, cout]() {
      if (kernel.requires_grad()) {
        detail::gemm(cols->data(), out.node()->grad.data(),
                     kernel.node()->grad.data(), row_len, oh * ow, cout, true,
                     false, true);
      }
      if (input.requires_grad()) {
        std::vector<T> dcols(oh * ow * row_len);
        detail::gemm(out.node()->grad.data(), kernel.value().data(),
                     dcols.data(), oh * ow, cout, row_len, false, true, false);
        col2im_add(dcols.data(), h, w, cin, kh, kw, stride, padding, oh, ow,
                   input.node()->grad.data());
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2(Tape<T>* tape, const Tensor<T>& input) {
  if (input.rank() != 3) {
    throw DimError("maxpool2: expected [H,W,C], got " +
                   shape_str(input.shape()));
  }
  const std::size_t h = input.shape()[0], w = input.shape()[1],
                    c = input.shape()[2];
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimError("maxpool2: spatial dims must be even, got " +
                   shape_str(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  bool track = want_grad(tape, {input});
  Tensor<T> out = Tensor<T>::zeros({oh, ow, c}, track);
  auto argmax = std::make_shared<std::vector<std::size_t>>(oh * ow * c);
  const T* x = input.value().data();
  T* y = out.value().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = (2 * oy * w + 2 * ox) * c + ch;
        T bv = x[best];
        const std::size_t cand[3] = {(2 * oy * w + 2 * ox + 1) * c + ch,
                                     ((2 * oy + 1) * w + 2 * ox) * c + ch,
                                     ((2 * oy + 1) * w + 2 * ox + 1) * c + ch};
        for (std::size_t idx : cand) {
          if (x[idx] > bv) {
            bv = x[idx];
            best = idx;
          }
        }
        y[(oy * ow + ox) * c + ch] = bv;
        (*argmax)[(oy * ow + ox) * c + ch] = best;
      }
    }
  }
  if (track) {
    tape->record({out.node()}, [input, out, argmax]() {
      if (!input.requires_grad()) return;
      const auto& g = out.node()->grad;
      auto& dx = input.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) dx[(*argmax)[i]] += g[i];
    });
  }
  return out;
}

namespace {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> binary_op(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b,
                    const char* name, FwdFn fwd, BwdFn bwd) {
  check_same_shape(a, b, name);
  bool track = want_grad(tape, {a, b});
  Tensor<T> out = Tensor<T>::zeros(a.shape(), track);
  const std::size_t n = a.size();
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.value().data();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  if (track) {
    tape->record({out.node()}, [a, b, out, bwd, n]() {
      const auto& g = out.node()->grad;
      for (std::size_t i = 0; i < n; ++i) {
        T da, db;
        bwd(a.value()[i], b.value()[i], g[i], da, db);
        if (a.requires_grad()) a.node()->grad[i] += da;
        if (b.requires_grad()) b.node()->grad[i] += db;
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      tape, a, b, "add", [](T x, T y) { return x + y; },
      [](T, T, T g, T& da, T& db) {
        da = g;
        db = g;
      });
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      tape, a, b, "sub", [](T x, T y) { return x - y; },
      [](T, T, T g, T& da, T& db) {
        da = g;
        db = -g;
      });
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op(
      tape, a, b, "mul", [](T x, T y) { return x * y; },
      [](T x, T y, T g, T& da, T& db) {
        da = g * y;
        db = g * x;
      });
}

namespace {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_op(Tape<T>* tape, const Tensor<T>& x, FwdFn fwd, BwdFn bwd) {
  bool track = want_grad(tape, {x});
  Tensor<T> out = Tensor<T>::zeros(x.shape(), track);
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = fwd(x.value()[i]);
  if (track) {
    tape->record({out.node()}, [x, out, bwd, n]() {
      if (!x.requires_grad()) return;
      const auto& g = out.node()->grad;
      for (std::size_t i = 0; i < n; ++i) {
        x.node()->grad[i] += bwd(x.value()[i], out.value()[i], g[i]);
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  return unary_op(
      tape, x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y, T g) { return g * y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(Tape<T>* tape, const Tensor<T>& x) {
  return unary_op(
      tape, x, [](T v) { return std::tanh(v); },
      [](T, T y, T g) { return g * (T(1) - y * y); });
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  return unary_op(
      tape, x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T, T g) { return v > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T c) {
  return unary_op(
      tape, x, [c](T v) { return v * c; },
      [c](T, T, T g) { return g * c; });
}

template <typename T>
Tensor<T> mul_scalar(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s) {
  if (s.size() != 1) {
    throw DimError("mul_scalar: s must be rank-0, got " + shape_str(s.shape()));
  }
  bool track = want_grad(tape, {x, s});
  Tensor<T> out = Tensor<T>::zeros(x.shape(), track);
  const T sv = s.value()[0];
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.value()[i] = x.value()[i] * sv;
  }
  if (track) {
    tape->record({out.node()}, [x, s, out]() {
      const auto& g = out.node()->grad;
      const T sv2 = s.value()[0];
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x.requires_grad()) x.node()->grad[i] += g[i] * sv2;
        if (s.requires_grad()) s.node()->grad[0] += g[i] * x.value()[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_scalar(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& s) {
  if (s.size() != 1) {
    throw DimError("add_scalar: s must be rank-0, got " + shape_str(s.shape()));
  }
  bool track = want_grad(tape, {x, s});
  Tensor<T> out = Tensor<T>::zeros(x.shape(), track);
  const T sv = s.value()[0];
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.value()[i] = x.value()[i] + sv;
  }
  if (track) {
    tape->record({out.node()}, [x, s, out]() {
      const auto& g = out.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x.requires_grad()) x.node()->grad[i] += g[i];
        if (s.requires_grad()) s.node()->grad[0] += g[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reduce_mean(Tape<T>* tape, const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimError("reduce_mean: axis " + std::to_string(axis) +
                   " out of range for shape " + shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  bool track = want_grad(tape, {x});
  Tensor<T> out = Tensor<T>::zeros(out_shape, track);
  const T* px = x.value().data();
  T* po = out.value().data();
  const T inv = T(1) / static_cast<T>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = 0; a < n; ++a) {
      const T* src = px + (o * n + a) * inner;
      T* dst = po + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) po[i] *= inv;
  if (track) {
    tape->record({out.node()}, [x, out, outer, inner, n, inv]() {
      if (!x.requires_grad()) return;
      const auto& g = out.node()->grad;
      auto& dx = x.node()->grad;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t a = 0; a < n; ++a) {
          T* dst = dx.data() + (o * n + a) * inner;
          const T* src = g.data() + o * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                   shape_str(shape));
  }
  bool track = want_grad(tape, {x});
  Tensor<T> out = Tensor<T>::from(std::move(shape),
                                  {x.value().begin(), x.value().end()}, track);
  if (track) {
    tape->record({out.node()}, [x, out]() {
      if (!x.requires_grad()) return;
      const auto& g = out.node()->grad;
      auto& dx = x.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> select0(Tape<T>* tape, const Tensor<T>& x, std::size_t i) {
  if (x.rank() == 0 || i >= x.shape()[0]) {
    throw DimError("select0: index " + std::to_string(i) +
                   " out of range for shape " + shape_str(x.shape()));
  }
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t block = shape_size(out_shape);
  bool track = want_grad(tape, {x});
  Tensor<T> out = Tensor<T>::from(
      std::move(out_shape),
      {x.value().begin() + i * block, x.value().begin() + (i + 1) * block},
      track);
  if (track) {
    tape->record({out.node()}, [x, out, i, block]() {
      if (!x.requires_grad()) return;
      const auto& g = out.node()->grad;
      auto& dx = x.node()->grad;
      for (std::size_t j = 0; j < block; ++j) dx[i * block + j] += g[j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice1d(Tape<T>* tape, const Tensor<T>& x, std::size_t begin,
                  std::size_t len) {
  if (x.rank() != 1 || begin + len > x.shape()[0]) {
    throw DimError("slice1d: [" + std::to_string(begin) + ", " +
                   std::to_string(begin + len) + ") out of range for shape " +
                   shape_str(x.shape()));
  }
  bool track = want_grad(tape, {x});
  Tensor<T> out = Tensor<T>::from(
      {len}, {x.value().begin() + begin, x.value().begin() + begin + len},
      track);
  if (track) {
    tape->record({out.node()}, [x, out, begin, len]() {
      if (!x.requires_grad()) return;
      const auto& g = out.node()->grad;
      auto& dx = x.node()->grad;
      for (std::size_t j = 0; j < len; ++j) dx[begin + j] += g[j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat1d(Tape<T>* tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimError("concat1d: no inputs");
  std::size_t total = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p.rank() != 1) {
      throw DimError("concat1d: expected rank-1 parts, got " +
                     shape_str(p.shape()));
    }
    total += p.shape()[0];
    track = track || (tape && p.requires_grad());
  }
  Tensor<T> out = Tensor<T>::zeros({total}, track);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().begin(), p.value().end(), out.value().begin() + off);
    off += p.shape()[0];
  }
  if (track) {
    tape->record({out.node()}, [parts, out]() {
      const auto& g = out.node()->grad;
      std::size_t off2 = 0;
      for (const auto& p : parts) {
        if (p.requires_grad()) {
          auto& dp = p.node()->grad;
          for (std::size_t j = 0; j < p.size(); ++j) dp[j] += g[off2 + j];
        }
        off2 += p.size();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> stack0(Tape<T>* tape, const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimError("stack0: no inputs");
  const Shape& elem = parts[0].shape();
  bool track = false;
  for (const auto& p : parts) {
    check_same_shape(p, parts[0], "stack0");
    track = track || (tape && p.requires_grad());
  }
  Shape out_shape;
  out_shape.push_back(parts.size());
  out_shape.insert(out_shape.end(), elem.begin(), elem.end());
  Tensor<T> out = Tensor<T>::zeros(out_shape, track);
  const std::size_t block = shape_size(elem);
  for (std::size_t t = 0; t < parts.size(); ++t) {
    std::copy(parts[t].value().begin(), parts[t].value().end(),
              out.value().begin() + t * block);
  }
  if (track) {
    tape->record({out.node()}, [parts, out, block]() {
      const auto& g = out.node()->grad;
      for (std::size_t t = 0; t < parts.size(); ++t) {
        if (!parts[t].requires_grad()) continue;
        auto& dp = parts[t].node()->grad;
        for (std::size_t j = 0; j < block; ++j) dp[j] += g[t * block + j];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(Tape<T>* tape, const Tensor<T>& x) {
  bool track = want_grad(tape, {x});
  T acc = 0;
  for (T v : x.value()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc, track);
  if (track) {
    tape->record({out.node()}, [x, out]() {
      if (!x.requires_grad()) return;
      const T g = out.node()->grad[0];
      auto& dx = x.node()->grad;
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> bias_add_hwc(Tape<T>* tape, const Tensor<T>& x, const Tensor<T>& b) {
  if (x.rank() != 3 || b.rank() != 1 || b.shape()[0] != x.shape()[2]) {
    throw DimError("bias_add_hwc: x " + shape_str(x.shape()) + ", b " +
                   shape_str(b.shape()));
  }
  const std::size_t hw = x.shape()[0] * x.shape()[1];
  const std::size_t c = x.shape()[2];
  bool track = want_grad(tape, {x, b});
  Tensor<T> out = Tensor<T>::zeros(x.shape(), track);
  const T* px = x.value().data();
  const T* pb = b.value().data();
  T* po = out.value().data();
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) po[i * c + ch] = px[i * c + ch] + pb[ch];
  }
  if (track) {
    tape->record({out.node()}, [x, b, out, hw, c]() {
      const auto& g = out.node()->grad;
      if (x.requires_grad()) {
        auto& dx = x.node()->grad;
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      }
      if (b.requires_grad()) {
        auto& db = b.node()->grad;
        for (std::size_t i = 0; i < hw; ++i) {
          for (std::size_t ch = 0; ch < c; ++ch) db[ch] += g[i * c + ch];
        }
      }
    });
  }
  return out;
}

}  // namespace ops

template <typename T>
T relative_error(T analytic, T numeric) {
  const T mag = std::max(std::abs(analytic), std::abs(numeric));
  const T diff = std::abs(analytic - numeric);
  if (mag < T(1e-8)) return diff;  // absolute fallback
  return diff / mag;
}

template <typename T>
FdReport<T> finite_difference_check(
    const std::function<Tensor<T>(Tape<T>*, const Tensor<T>&)>& f,
    const Tensor<T>& point, T step) {
  if (step <= T(0)) throw ContractError("finite_difference_check: step <= 0");
  Tensor<T> x = Tensor<T>::from(point.shape(),
                                {point.value().begin(), point.value().end()},
                                true);
  Tape<T> tape;
  Tensor<T> loss = f(&tape, x);
  if (loss.size() != 1) {
    throw ContractError("finite_difference_check: f must be scalar-valued");
  }
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    throw NumericError("finite_difference_check: nonfinite function value");
  }
  tape.backward(loss);
  std::vector<T> analytic(x.grad().begin(), x.grad().end());

  FdReport<T> report;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T saved = x.value()[i];
    x.value()[i] = saved + step;
    const T fp = f(nullptr, x).item();
    x.value()[i] = saved - step;
    const T fm = f(nullptr, x).item();
    x.value()[i] = saved;
    if (!std::isfinite(static_cast<double>(fp)) ||
        !std::isfinite(static_cast<double>(fm))) {
      throw NumericError("finite_difference_check: nonfinite function value");
    }
    const T numeric = (fp - fm) / (T(2) * step);
    const T err = relative_error(analytic[i], numeric);
    if (err > report.max_err) {
      report.max_err = err;
      report.worst_index = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

// Explicit instantiations: 32-bit is the training precision, 64-bit the
// gradient-verification precision.
#define TREID_INSTANTIATE(T)                                                   \
  template class Tensor<T>;                                                    \
  template class Tape<T>;                                                      \
  template T relative_error<T>(T, T);                                          \
  template FdReport<T> finite_difference_check<T>(                             \
      const std::function<Tensor<T>(Tape<T>*, const Tensor<T>&)>&,             \
      const Tensor<T>&, T);                                                    \
  namespace ops {                                                              \
  template Tensor<T> matmul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> conv2d<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&,   \
                               std::size_t, std::size_t);                      \
  template Tensor<T> maxpool2<T>(Tape<T>*, const Tensor<T>&);                  \
  template Tensor<T> add<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> sub<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> mul<T>(Tape<T>*, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> sigmoid<T>(Tape<T>*, const Tensor<T>&);                   \
  template Tensor<T> tanh<T>(Tape<T>*, const Tensor<T>&);                      \
  template Tensor<T> relu<T>(Tape<T>*, const Tensor<T>&);                      \
  template Tensor<T> scale<T>(Tape<T>*, const Tensor<T>&, T);                  \
  template Tensor<T> mul_scalar<T>(Tape<T>*, const Tensor<T>&,                 \
                                   const Tensor<T>&);                          \
  template Tensor<T> add_scalar<T>(Tape<T>*, const Tensor<T>&,                 \
                                   const Tensor<T>&);                          \
  template Tensor<T> reduce_mean<T>(Tape<T>*, const Tensor<T>&, std::size_t);  \
  template Tensor<T> reshape<T>(Tape<T>*, const Tensor<T>&, Shape);            \
  template Tensor<T> select0<T>(Tape<T>*, const Tensor<T>&, std::size_t);      \
  template Tensor<T> slice1d<T>(Tape<T>*, const Tensor<T>&, std::size_t,       \
                                std::size_t);                                  \
  template Tensor<T> concat1d<T>(Tape<T>*, const std::vector<Tensor<T>>&);     \
  template Tensor<T> stack0<T>(Tape<T>*, const std::vector<Tensor<T>>&);       \
  template Tensor<T> sum_all<T>(Tape<T>*, const Tensor<T>&);                   \
  template Tensor<T> bias_add_hwc<T>(Tape<T>*, const Tensor<T>&,               \
                                     const Tensor<T>&);                        \
  }

TREID_INSTANTIATE(float)
TREID_INSTANTIATE(double)
TREID_INSTANTIATE(long double)
#undef TREID_INSTANTIATE

}  // namespace treid
