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
#ifndef TREID_TRL_HPP_
#define TREID_TRL_HPP_

#include <utility>

#include "treid/nn.hpp"
#include "treid/tensor.hpp"

namespace treid::trl {

// Generic features: first BiLSTM over the per-frame descriptors, then
// temporal mean pooling. Returns (per-step features [T,2H], pooled [2H]).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> generic_features(
    Tape<T>* tape, const Tensor<T>& f_seq, const nn::BiLstmParams<T>& lstm1);

// Mean-centered residuals r_t = gbar1 - g1_t, the inputs of the second
// BiLSTM. Exposed separately so the zero-sum identity can be checked.
template <typename T>
Tensor<T> residual_sequence(Tape<T>* tape, const Tensor<T>& g1_seq,
                            const Tensor<T>& gbar1);

// Specific features: second BiLSTM over the residuals, then temporal mean
// pooling. Returns (per-step features [T,2H], pooled [2H]).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> specific_features(
    Tape<T>* tape, const Tensor<T>& g1_seq, const Tensor<T>& gbar1,
    const nn::BiLstmParams<T>& lstm2);

// Per-stream fusion g = alpha * gbar1 + (1 - alpha) * gbar2.
template <typename T>
Tensor<T> fuse_stream(Tape<T>* tape, const Tensor<T>& gbar1,
                      const Tensor<T>& gbar2, double alpha);

// Overall fusion: each stream vector is L2-normalized, weighted by beta and
// (1 - beta), and the two are concatenated.
template <typename T>
Tensor<T> fuse_overall(Tape<T>* tape, const Tensor<T>& g_main,
                       const Tensor<T>& g_aligned, double beta);

// x / ||x||_2; zero norm raises a numeric error.
template <typename T>
Tensor<T> l2_normalize(Tape<T>* tape, const Tensor<T>& x);

}  // namespace treid::trl

#endif  // TREID_TRL_HPP_
