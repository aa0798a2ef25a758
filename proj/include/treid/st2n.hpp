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
#ifndef TREID_ST2N_HPP_
#define TREID_ST2N_HPP_

#include <array>
#include <cstdint>
#include <vector>

#include "treid/nn.hpp"
#include "treid/params.hpp"
#include "treid/rng.hpp"
#include "treid/tensor.hpp"

namespace treid {

// Per-frame scale/translation transform in normalized [-1, 1] coordinates.
// Exactly 4 parameters per frame; the identity is (1, 1, 0, 0).
struct TransformParams {
  double sx = 1.0;
  double sy = 1.0;
  double tx = 0.0;
  double ty = 0.0;
};

// Row-major 2x3 affine: [[sx, 0, tx], [0, sy, ty]].
using AffineMatrix = std::array<double, 6>;

AffineMatrix build_affine(const TransformParams& theta);

// Source coordinates per output pixel, in normalized [-1, 1] space.
// Corner-aligned convention: size-1 axes map to coordinate 0.
template <typename T>
struct SamplingGrid {
  Tensor<T> xs;  // [outH, outW]
  Tensor<T> ys;  // [outH, outW]
};

// Constant (gradient-free) grid from an explicit affine matrix.
template <typename T>
SamplingGrid<T> generate_grid(const AffineMatrix& affine, std::size_t out_h,
                              std::size_t out_w);

// Differentiable grid from a theta tensor [4] = (sx, sy, tx, ty); this is
// the same math as build_affine + generate_grid but keeps the gradient path
// to theta. Shear-free affines only, by construction.
template <typename T>
SamplingGrid<T> make_theta_grid(Tape<T>* tape, const Tensor<T>& theta,
                                std::size_t out_h, std::size_t out_w);

// 4-neighbor bilinear interpolation of Y at the grid's source locations;
// out-of-bounds taps contribute zero. Differentiable in Y and in the grid
// coordinates (hence in theta when the grid came from make_theta_grid).
template <typename T>
Tensor<T> bilinear_sample(Tape<T>* tape, const Tensor<T>& y,
                          const SamplingGrid<T>& grid);

// Localization network: a shallow CNN aggregates each frame's high-level
// map, a BiLSTM adds bidirectional temporal context, and a 4-unit FC layer
// predicts theta per frame. The FC layer is initialized to zero weights
// with identity-transform bias, so theta is (1,1,0,0) before training.
struct LocalizationConfig {
  std::size_t width = 512;   // 1x1 conv channels
  std::size_t hidden = 256;  // BiLSTM hidden size
  double dropout = 0.5;
  bool pool = true;  // 2x2 stride-2 max pool between the two conv stages
  bool temporal = true;  // false degrades to the classic per-frame variant
};

template <typename T>
struct St2nParams {
  LocalizationConfig cfg;
  std::size_t in_channels = 0;
  Tensor<T> conv0_w, conv0_b;
  Tensor<T> norm0_gamma, norm0_beta;
  Tensor<T> conv1_w, conv1_b;
  Tensor<T> norm1_gamma, norm1_beta;
  nn::BiLstmParams<T> lstm;  // present only when cfg.temporal
  Tensor<T> fc_w, fc_b;
};

// Registers the localization parameters under "st2n.loc.*".
template <typename T>
St2nParams<T> make_st2n_params(ParamStore<T>& store,
                               const LocalizationConfig& cfg,
                               std::size_t in_channels, std::uint64_t seed);

// X_seq [T,H2,W2,C2] -> theta rows [T,4]. `dropout_rng` may be null when
// not training.
template <typename T>
Tensor<T> localize(Tape<T>* tape, const St2nParams<T>& params,
                   const Tensor<T>& x_seq, bool training, Rng* dropout_rng);

// localize + grid + sampling per frame; output spatial size equals the
// input spatial size. Also returns theta via out parameter when requested.
template <typename T>
Tensor<T> align_sequence(Tape<T>* tape, const St2nParams<T>& params,
                         const Tensor<T>& y_seq, const Tensor<T>& x_seq,
                         bool training, Rng* dropout_rng,
                         Tensor<T>* theta_out = nullptr);

// Reads row t of a [T,4] theta tensor.
template <typename T>
TransformParams theta_row(const Tensor<T>& theta, std::size_t t);

}  // namespace treid

#endif  // TREID_ST2N_HPP_
