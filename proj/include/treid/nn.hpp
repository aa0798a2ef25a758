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
#ifndef TREID_NN_HPP_
#define TREID_NN_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "treid/rng.hpp"
#include "treid/tensor.hpp"

namespace treid::nn {

// LSTM cell parameters. The 4H gate dimension is laid out as
// [input; forget; candidate; output].
template <typename T>
struct LstmParams {
  Tensor<T> wx;  // [4H, D]
  Tensor<T> wh;  // [4H, H]
  Tensor<T> b;   // [4H]
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
};

// Forward and backward directions hold disjoint parameter storage; the
// concatenated output dimension is 2H.
template <typename T>
struct BiLstmParams {
  LstmParams<T> fw;
  LstmParams<T> bw;
  std::size_t hidden() const { return fw.hidden; }
};

// One LSTM step: standard input/forget/output gates with a tanh candidate.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell_step(Tape<T>* tape,
                                               const Tensor<T>& x,
                                               const Tensor<T>& h_prev,
                                               const Tensor<T>& c_prev,
                                               const LstmParams<T>& params);

// Runs the forward pass over t = 1..T and the backward pass over t = T..1
// from zero initial states; output row t is [forward h_t ; backward h_t].
template <typename T>
Tensor<T> bilstm_forward(Tape<T>* tape, const Tensor<T>& seq,
                         const BiLstmParams<T>& params);

// Unidirectional variant (temporal-cell ablation); output [T, H].
template <typename T>
Tensor<T> lstm_forward(Tape<T>* tape, const Tensor<T>& seq,
                       const LstmParams<T>& params);

// W x + b for a rank-1 input.
template <typename T>
Tensor<T> fully_connected(Tape<T>* tape, const Tensor<T>& x,
                          const Tensor<T>& weights, const Tensor<T>& bias);

// Inverted dropout: zero units with probability `rate` and scale survivors
// by 1/(1-rate) in training mode; the exact identity in eval mode.
template <typename T>
Tensor<T> dropout(Tape<T>* tape, const Tensor<T>& x, double rate,
                  bool training, Rng& rng);

// Per-channel spatial mean of [H,W,C] -> [C].
template <typename T>
Tensor<T> global_avg_pool(Tape<T>* tape, const Tensor<T>& maps);

// Per-channel standardization over the spatial positions of one map,
// followed by a learned affine (gamma, beta).
template <typename T>
Tensor<T> spatial_norm(Tape<T>* tape, const Tensor<T>& x,
                       const Tensor<T>& gamma, const Tensor<T>& beta,
                       T eps = T(1e-5));

template <typename T>
Tensor<T> init_gaussian(const Shape& shape, Rng& rng, double mean = 0.0,
                        double variance = 0.01);

// Orthogonal init of a 2-D block: orthonormal columns when rows >= cols,
// orthonormal rows otherwise.
template <typename T>
Tensor<T> init_orthogonal(std::size_t rows, std::size_t cols, Rng& rng);

// Orthogonal weights, forget-gate bias 1, other biases 0.
template <typename T>
LstmParams<T> make_lstm_params(std::size_t input_dim, std::size_t hidden,
                               Rng& rng);

template <typename T>
BiLstmParams<T> make_bilstm_params(std::size_t input_dim, std::size_t hidden,
                                   Rng& rng);

}  // namespace treid::nn

#endif  // TREID_NN_HPP_
