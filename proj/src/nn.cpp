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
#include "treid/nn.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace treid::nn {

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell_step(Tape<T>* tape,
                                               const Tensor<T>& x,
                                               const Tensor<T>& h_prev,
                                               const Tensor<T>& c_prev,
                                               const LstmParams<T>& params) {
  const std::size_t hdim = params.hidden;
  if (x.rank() != 1 || x.shape()[0] != params.input_dim) {
    throw DimError("lstm_cell_step: input shape " + shape_str(x.shape()) +
                   " does not match input dim " +
                   std::to_string(params.input_dim));
  }
  if (h_prev.rank() != 1 || h_prev.shape()[0] != hdim || c_prev.rank() != 1 ||
      c_prev.shape()[0] != hdim) {
    throw DimError("lstm_cell_step: state shapes " + shape_str(h_prev.shape()) +
                   "/" + shape_str(c_prev.shape()) + " do not match hidden " +
                   std::to_string(hdim));
  }
  using namespace ops;
  Tensor<T> zx = fully_connected(tape, x, params.wx,
                                 Tensor<T>::zeros({4 * hdim}));
  Tensor<T> zh = fully_connected(tape, h_prev, params.wh, params.b);
  Tensor<T> z = add(tape, zx, zh);
  Tensor<T> gi = sigmoid(tape, slice1d(tape, z, 0, hdim));
  Tensor<T> gf = sigmoid(tape, slice1d(tape, z, hdim, hdim));
  Tensor<T> gc = ops::tanh(tape, slice1d(tape, z, 2 * hdim, hdim));
  Tensor<T> go = sigmoid(tape, slice1d(tape, z, 3 * hdim, hdim));
  Tensor<T> c = add(tape, mul(tape, gf, c_prev), mul(tape, gi, gc));
  Tensor<T> h = mul(tape, go, ops::tanh(tape, c));
  return {h, c};
}

namespace {

template <typename T>
std::vector<Tensor<T>> lstm_scan(Tape<T>* tape,
                                 const std::vector<Tensor<T>>& steps,
                                 const LstmParams<T>& params, bool reversed) {
  Tensor<T> h = Tensor<T>::zeros({params.hidden});
  Tensor<T> c = Tensor<T>::zeros({params.hidden});
  std::vector<Tensor<T>> outs(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::size_t t = reversed ? steps.size() - 1 - i : i;
    auto [hn, cn] = lstm_cell_step(tape, steps[t], h, c, params);
    h = hn;
    c = cn;
    outs[t] = h;
  }
  return outs;
}

template <typename T>
std::vector<Tensor<T>> unstack_rows(Tape<T>* tape, const Tensor<T>& seq) {
  if (seq.rank() != 2) {
    throw DimError("expected a [T, D] sequence, got " + shape_str(seq.shape()));
  }
  std::vector<Tensor<T>> rows(seq.shape()[0]);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    rows[t] = ops::select0(tape, seq, t);
  }
  return rows;
}

}  // namespace

template <typename T>
Tensor<T> bilstm_forward(Tape<T>* tape, const Tensor<T>& seq,
                         const BiLstmParams<T>& params) {
  auto steps = unstack_rows(tape, seq);
  auto fw = lstm_scan(tape, steps, params.fw, false);
  auto bw = lstm_scan(tape, steps, params.bw, true);
  std::vector<Tensor<T>> rows(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    rows[t] = ops::concat1d(tape, {fw[t], bw[t]});
  }
  return ops::stack0(tape, rows);
}

template <typename T>
Tensor<T> lstm_forward(Tape<T>* tape, const Tensor<T>& seq,
                       const LstmParams<T>& params) {
  auto steps = unstack_rows(tape, seq);
  auto fw = lstm_scan(tape, steps, params, false);
  return ops::stack0(tape, fw);
}

template <typename T>
Tensor<T> fully_connected(Tape<T>* tape, const Tensor<T>& x,
                          const Tensor<T>& weights, const Tensor<T>& bias) {
  if (x.rank() != 1 || weights.rank() != 2 ||
      weights.shape()[1] != x.shape()[0] || bias.rank() != 1 ||
      bias.shape()[0] != weights.shape()[0]) {
    throw DimError("fully_connected: x " + shape_str(x.shape()) + ", W " +
                   shape_str(weights.shape()) + ", b " +
                   shape_str(bias.shape()));
  }
  const std::size_t d = x.shape()[0], k = weights.shape()[0];
  Tensor<T> xm = ops::reshape(tape, x, {d, 1});
  Tensor<T> ym = ops::matmul(tape, weights, xm);
  Tensor<T> y = ops::reshape(tape, ym, {k});
  return ops::add(tape, y, bias);
}

template <typename T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, double rate,
                  bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ContractError("dropout: rate must lie in [0, 1), got " +
                        std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;  // exact identity
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Tensor<T> mask = Tensor<T>::zeros(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask.value()[i] = rng.uniform() >= rate ? keep_scale : T(0);
  }
  return ops::mul(tape, x, mask);
}

template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& maps) {
  if (maps.rank() != 3) {
    throw DimError("global_avg_pool: expected [H,W,C], got " +
                   shape_str(maps.shape()));
  }
  return ops::reduce_mean(tape, ops::reduce_mean(tape, maps, 0), 0);
}

template <typename T>
Tensor<T> spatial_norm(Tape<T>* tape, const Tensor<T>& x,
                       const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.rank() != 3) {
    throw DimError("spatial_norm: expected [H,W,C], got " +
                   shape_str(x.shape()));
  }
  const std::size_t c = x.shape()[2];
  if (gamma.rank() != 1 || gamma.shape()[0] != c || beta.rank() != 1 ||
      beta.shape()[0] != c) {
    throw DimError("spatial_norm: affine params " + shape_str(gamma.shape()) +
                   "/" + shape_str(beta.shape()) + " do not match channels " +
                   std::to_string(c));
  }
  const std::size_t n = x.shape()[0] * x.shape()[1];
  bool track = tape && (x.requires_grad() || gamma.requires_grad() ||
                        beta.requires_grad());
  Tensor<T> out = Tensor<T>::zeros(x.shape(), track);
  // Saved normalized values and inverse sigmas for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_sigma = std::make_shared<std::vector<T>>(c);
  const T* px = x.value().data();
  T* po = out.value().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    T mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += px[i * c + ch];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T d = px[i * c + ch] - mean;
      var += d * d;
    }
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_sigma)[ch] = is;
    const T g = gamma.value()[ch], b = beta.value()[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const T xh = (px[i * c + ch] - mean) * is;
      (*xhat)[i * c + ch] = xh;
      po[i * c + ch] = g * xh + b;
    }
  }
  if (track) {
    tape->record({out.node()}, [x, gamma, beta, out, xhat, inv_sigma, n, c]() {
      const auto& gy = out.node()->grad;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T g = gamma.value()[ch];
        T sum_dy = 0, sum_dy_xh = 0;
        for (std::size_t i = 0; i < n; ++i) {
          sum_dy += gy[i * c + ch];
          sum_dy_xh += gy[i * c + ch] * (*xhat)[i * c + ch];
        }
        if (beta.requires_grad()) beta.node()->grad[ch] += sum_dy;
        if (gamma.requires_grad()) gamma.node()->grad[ch] += sum_dy_xh;
        if (x.requires_grad()) {
          const T is = (*inv_sigma)[ch];
          const T inv_n = T(1) / static_cast<T>(n);
          for (std::size_t i = 0; i < n; ++i) {
            const T dxh = gy[i * c + ch] * g;
            x.node()->grad[i * c + ch] +=
                is * (dxh - inv_n * sum_dy * g -
                      (*xhat)[i * c + ch] * inv_n * sum_dy_xh * g);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> init_gaussian(const Shape& shape, Rng& rng, double mean,
                        double variance) {
  if (shape_size(shape) == 0) throw DimError("init_gaussian: degenerate shape");
  Tensor<T> t = Tensor<T>::zeros(shape);
  const double stddev = std::sqrt(variance);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.value()[i] = static_cast<T>(rng.normal(mean, stddev));
  }
  return t;
}

template <typename T>
Tensor<T> init_orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) {
    throw DimError("init_orthogonal: degenerate shape");
  }
  const bool tall = rows >= cols;
  const std::size_t m = tall ? rows : cols;
  const std::size_t n = tall ? cols : rows;
  Eigen::MatrixXd a(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rng.normal();
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q =
      qr.householderQ() *
      Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(m),
                                static_cast<Eigen::Index>(n));
  Eigen::MatrixXd r = qr.matrixQR()
                          .topRows(static_cast<Eigen::Index>(n))
                          .template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Tensor<T> t = Tensor<T>::zeros({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = tall ? q(static_cast<Eigen::Index>(i),
                                static_cast<Eigen::Index>(j))
                            : q(static_cast<Eigen::Index>(j),
                                static_cast<Eigen::Index>(i));
      t.value()[i * cols + j] = static_cast<T>(v);
    }
  }
  return t;
}

template <typename T>
LstmParams<T> make_lstm_params(std::size_t input_dim, std::size_t hidden,
                               Rng& rng) {
  LstmParams<T> p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  p.wx = init_orthogonal<T>(4 * hidden, input_dim, rng);
  p.wh = init_orthogonal<T>(4 * hidden, hidden, rng);
  p.b = Tensor<T>::zeros({4 * hidden});
  // Forget-gate bias 1, others 0.
  for (std::size_t i = hidden; i < 2 * hidden; ++i) p.b.value()[i] = T(1);
  return p;
}

template <typename T>
BiLstmParams<T> make_bilstm_params(std::size_t input_dim, std::size_t hidden,
                                   Rng& rng) {
  BiLstmParams<T> p;
  p.fw = make_lstm_params<T>(input_dim, hidden, rng);
  p.bw = make_lstm_params<T>(input_dim, hidden, rng);
  return p;
}

#define TREID_NN_INSTANTIATE(T)                                               \
  template std::pair<Tensor<T>, Tensor<T>> lstm_cell_step<T>(                 \
      Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
      const LstmParams<T>&);                                                  \
  template Tensor<T> bilstm_forward<T>(Tape<T>*, const Tensor<T>&,            \
                                       const BiLstmParams<T>&);               \
  template Tensor<T> lstm_forward<T>(Tape<T>*, const Tensor<T>&,              \
                                     const LstmParams<T>&);                   \
  template Tensor<T> fully_connected<T>(Tape<T>*, const Tensor<T>&,           \
                                        const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> dropout<T>(Tape<T>*, const Tensor<T>&, double, bool,     \
                                Rng&);                                        \
  template Tensor<T> global_avg_pool<T>(Tape<T>*, const Tensor<T>&);          \
  template Tensor<T> spatial_norm<T>(Tape<T>*, const Tensor<T>&,              \
                                     const Tensor<T>&, const Tensor<T>&, T);  \
  template Tensor<T> init_gaussian<T>(const Shape&, Rng&, double, double);    \
  template Tensor<T> init_orthogonal<T>(std::size_t, std::size_t, Rng&);      \
  template LstmParams<T> make_lstm_params<T>(std::size_t, std::size_t, Rng&); \
  template BiLstmParams<T> make_bilstm_params<T>(std::size_t, std::size_t,    \
                                                 Rng&);

TREID_NN_INSTANTIATE(float)
TREID_NN_INSTANTIATE(double)
TREID_NN_INSTANTIATE(long double)
#undef TREID_NN_INSTANTIATE

}  // namespace treid::nn
