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
#ifndef TREID_BACKBONE_HPP_
#define TREID_BACKBONE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "treid/params.hpp"
#include "treid/tensor.hpp"

namespace treid {

// Desk-scale replacement for the full-size base network. A shared front-end
// produces low-level maps Y (the bilinear sampler's input); per-stream tails
// produce high-level maps X and frame descriptors. Each block is
// conv3x3(stride 1, pad 1) + bias + ReLU + maxpool2, so every block halves
// the spatial size; the widths lists set the depth and channel counts.
struct BackboneConfig {
  std::size_t input_h = 64;
  std::size_t input_w = 64;
  std::size_t input_c = 3;
  std::vector<std::size_t> front_widths = {16, 32};
  std::vector<std::size_t> tail_widths = {64, 64};
  std::size_t descriptor_dim = 64;

  void validate() const;

  std::size_t front_out_h() const { return input_h >> front_widths.size(); }
  std::size_t front_out_w() const { return input_w >> front_widths.size(); }
  std::size_t front_out_c() const { return front_widths.back(); }
  std::size_t tail_out_h() const { return front_out_h() >> tail_widths.size(); }
  std::size_t tail_out_w() const { return front_out_w() >> tail_widths.size(); }
  std::size_t tail_out_c() const { return tail_widths.back(); }
};

enum class Stream { kMain, kAligned };

template <typename T>
struct ConvBlock {
  Tensor<T> w;  // [3,3,Cin,Cout]
  Tensor<T> b;  // [Cout]
};

// The front-end storage is referenced by both streams (one update affects
// both); the tails and descriptor projections are disjoint per stream.
template <typename T>
struct TwoStreamParams {
  BackboneConfig cfg;
  std::vector<ConvBlock<T>> front;
  std::vector<ConvBlock<T>> main_tail;
  std::vector<ConvBlock<T>> aligned_tail;
  Tensor<T> main_proj_w, main_proj_b;        // [D, C2], [D]
  Tensor<T> aligned_proj_w, aligned_proj_b;  // [D, C2], [D]
};

// Registers all backbone blocks in `store` under "frontend.*", "tail.main.*",
// "tail.aligned.*" and "desc.*", initialized from per-name sub-streams of
// `seed` (Gaussian mean 0, variance 0.01 for weights; zero biases).
template <typename T>
TwoStreamParams<T> make_two_stream_params(ParamStore<T>& store,
                                          const BackboneConfig& cfg,
                                          std::uint64_t seed);

template <typename T>
Tensor<T> front_end(Tape<T>* tape, const TwoStreamParams<T>& params,
                    const Tensor<T>& frame);

template <typename T>
Tensor<T> tail(Tape<T>* tape, const TwoStreamParams<T>& params, Stream stream,
               const Tensor<T>& map);

// GAP over the high-level map followed by the stream's learned projection.
template <typename T>
Tensor<T> frame_descriptor(Tape<T>* tape, const TwoStreamParams<T>& params,
                           Stream stream, const Tensor<T>& x);

}  // namespace treid

#endif  // TREID_BACKBONE_HPP_
