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
#include "treid/trl.hpp"

#include <cmath>

namespace treid::trl {

template <typename T>
std::pair<Tensor<T>, Tensor<T>> generic_features(
    Tape<T>* tape, const Tensor<T>& f_seq, const nn::BiLstmParams<T>& lstm1) {
  if (f_seq.rank() != 2) {
    throw DimError("generic_features: expected [T,D], got " +
                   shape_str(f_seq.shape()));
  }
  Tensor<T> g1_seq = nn::bilstm_forward(tape, f_seq, lstm1);
  Tensor<T> gbar1 = ops::reduce_mean(tape, g1_seq, 0);
  return {g1_seq, gbar1};
}

template <typename T>
Tensor<T> residual_sequence(Tape<T>* tape, const Tensor<T>& g1_seq,
                            const Tensor<T>& gbar1) {
  if (g1_seq.rank() != 2 || gbar1.rank() != 1 ||
      g1_seq.shape()[1] != gbar1.shape()[0]) {
    throw DimError("residual_sequence: " + shape_str(g1_seq.shape()) +
                   " vs " + shape_str(gbar1.shape()));
  }
  const std::size_t frames = g1_seq.shape()[0];
  std::vector<Tensor<T>> rows(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    rows[t] = ops::sub(tape, gbar1, ops::select0(tape, g1_seq, t));
  }
  return ops::stack0(tape, rows);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> specific_features(
    Tape<T>* tape, const Tensor<T>& g1_seq, const Tensor<T>& gbar1,
    const nn::BiLstmParams<T>& lstm2) {
  Tensor<T> residuals = residual_sequence(tape, g1_seq, gbar1);
  Tensor<T> g2_seq = nn::bilstm_forward(tape, residuals, lstm2);
  Tensor<T> gbar2 = ops::reduce_mean(tape, g2_seq, 0);
  return {g2_seq, gbar2};
}

template <typename T>
Tensor<T> fuse_stream(Tape<T>* tape, const Tensor<T>& gbar1,
                      const Tensor<T>& gbar2, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw ConfigError("fuse_stream: alpha must lie in [0, 1], got " +
                      std::to_string(alpha));
  }
  if (!shape_eq(gbar1.shape(), gbar2.shape())) {
    throw DimError("fuse_stream: shape mismatch " + shape_str(gbar1.shape()) +
                   " vs " + shape_str(gbar2.shape()));
  }
  return ops::add(tape, ops::scale(tape, gbar1, static_cast<T>(alpha)),
                  ops::scale(tape, gbar2, static_cast<T>(1.0 - alpha)));
}

template <typename T>
Tensor<T> l2_normalize(Tape<T>* tape, const Tensor<T>& x) {
  if (x.rank() != 1) {
    throw DimError("l2_normalize: expected rank-1, got " +
                   shape_str(x.shape()));
  }
  T sq = 0;
  for (T v : x.value()) sq += v * v;
  const T norm = std::sqrt(sq);
  if (!(norm > T(0)) || !std::isfinite(static_cast<double>(norm))) {
    throw NumericError("l2_normalize: zero or nonfinite norm");
  }
  bool track = tape && x.requires_grad();
  Tensor<T> out = Tensor<T>::zeros(x.shape(), track);
  const T inv = T(1) / norm;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.value()[i] = x.value()[i] * inv;
  }
  if (track) {
    tape->record({out.node()}, [x, out, inv]() {
      const auto& g = out.node()->grad;
      T ydotg = 0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ydotg += out.value()[i] * g[i];
      }
      auto& dx = x.node()->grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        dx[i] += inv * (g[i] - out.value()[i] * ydotg);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> fuse_overall(Tape<T>* tape, const Tensor<T>& g_main,
                       const Tensor<T>& g_aligned, double beta) {
  if (beta < 0.0 || beta > 1.0) {
    throw ConfigError("fuse_overall: beta must lie in [0, 1], got " +
                      std::to_string(beta));
  }
  if (!shape_eq(g_main.shape(), g_aligned.shape())) {
    throw DimError("fuse_overall: shape mismatch " +
                   shape_str(g_main.shape()) + " vs " +
                   shape_str(g_aligned.shape()));
  }
  Tensor<T> nm, na;
  try {
    nm = l2_normalize(tape, g_main);
  } catch (const NumericError&) {
    throw NumericError("fuse_overall: main-stream vector has zero norm");
  }
  try {
    na = l2_normalize(tape, g_aligned);
  } catch (const NumericError&) {
    throw NumericError("fuse_overall: aligned-stream vector has zero norm");
  }
  return ops::concat1d(
      tape, {ops::scale(tape, nm, static_cast<T>(beta)),
             ops::scale(tape, na, static_cast<T>(1.0 - beta))});
}

#define TREID_TRL_INSTANTIATE(T)                                              \
  template std::pair<Tensor<T>, Tensor<T>> generic_features<T>(               \
      Tape<T>*, const Tensor<T>&, const nn::BiLstmParams<T>&);                \
  template Tensor<T> residual_sequence<T>(Tape<T>*, const Tensor<T>&,         \
                                          const Tensor<T>&);                  \
  template std::pair<Tensor<T>, Tensor<T>> specific_features<T>(              \
      Tape<T>*, const Tensor<T>&, const Tensor<T>&,                           \
      const nn::BiLstmParams<T>&);                                            \
  template Tensor<T> fuse_stream<T>(Tape<T>*, const Tensor<T>&,               \
                                    const Tensor<T>&, double);                \
  template Tensor<T> l2_normalize<T>(Tape<T>*, const Tensor<T>&);             \
  template Tensor<T> fuse_overall<T>(Tape<T>*, const Tensor<T>&,              \
                                     const Tensor<T>&, double);

TREID_TRL_INSTANTIATE(float)
TREID_TRL_INSTANTIATE(double)
TREID_TRL_INSTANTIATE(long double)
#undef TREID_TRL_INSTANTIATE

}  // namespace treid::trl
