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
#include "treid/backbone.hpp"

#include "treid/nn.hpp"
#include "treid/rng.hpp"

namespace treid {

void BackboneConfig::validate() const {
  if (front_widths.empty() || tail_widths.empty()) {
    throw ConfigError("backbone: front and tail need at least one block each");
  }
  if (descriptor_dim == 0) throw ConfigError("backbone: descriptor_dim == 0");
  if (input_c == 0) throw ConfigError("backbone: input channels == 0");
  const std::size_t total = front_widths.size() + tail_widths.size();
  const std::size_t div = std::size_t(1) << total;
  if (input_h % div != 0 || input_w % div != 0 || input_h / div == 0 ||
      input_w / div == 0) {
    throw ConfigError(
        "backbone: input " + std::to_string(input_h) + "x" +
        std::to_string(input_w) + " does not divide evenly through " +
        std::to_string(total) + " pooling stages");
  }
  for (std::size_t wdt : front_widths) {
    if (wdt == 0) throw ConfigError("backbone: zero front width");
  }
  for (std::size_t wdt : tail_widths) {
    if (wdt == 0) throw ConfigError("backbone: zero tail width");
  }
}

namespace {

template <typename T>
std::vector<ConvBlock<T>> make_blocks(ParamStore<T>& store,
                                      const std::string& prefix,
                                      std::size_t in_c,
                                      const std::vector<std::size_t>& widths,
                                      std::uint64_t seed) {
  std::vector<ConvBlock<T>> blocks;
  std::size_t c = in_c;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string base = prefix + ".block" + std::to_string(i) + ".conv";
    Rng rng = substream(seed, "init/" + base + ".w");
    ConvBlock<T> blk;
    blk.w = store.add(base + ".w",
                      nn::init_gaussian<T>({3, 3, c, widths[i]}, rng));
    blk.b = store.add(base + ".b", Tensor<T>::zeros({widths[i]}));
    blocks.push_back(blk);
    c = widths[i];
  }
  return blocks;
}

// conv3x3 (pad 1) + bias + ReLU + maxpool2 feature stack.
template <typename T>
Tensor<T> run_blocks(Tape<T>* tape, const std::vector<ConvBlock<T>>& blocks,
                     Tensor<T> x) {
  for (const auto& blk : blocks) {
    x = ops::conv2d(tape, x, blk.w, 1, 1);
    x = ops::bias_add_hwc(tape, x, blk.b);
    x = ops::relu(tape, x);
    x = ops::maxpool2(tape, x);
  }
  return x;
}

}  // namespace

template <typename T>
TwoStreamParams<T> make_two_stream_params(ParamStore<T>& store,
                                          const BackboneConfig& cfg,
                                          std::uint64_t seed) {
  cfg.validate();
  TwoStreamParams<T> p;
  p.cfg = cfg;
  p.front = make_blocks(store, "frontend", cfg.input_c, cfg.front_widths, seed);
  p.main_tail =
      make_blocks(store, "tail.main", cfg.front_out_c(), cfg.tail_widths, seed);
  p.aligned_tail = make_blocks(store, "tail.aligned", cfg.front_out_c(),
                               cfg.tail_widths, seed);
  const std::size_t c2 = cfg.tail_out_c();
  {
    Rng rng = substream(seed, "init/desc.main.proj.w");
    p.main_proj_w = store.add(
        "desc.main.proj.w",
        nn::init_gaussian<T>({cfg.descriptor_dim, c2}, rng));
    p.main_proj_b =
        store.add("desc.main.proj.b", Tensor<T>::zeros({cfg.descriptor_dim}));
  }
  {
    Rng rng = substream(seed, "init/desc.aligned.proj.w");
    p.aligned_proj_w = store.add(
        "desc.aligned.proj.w",
        nn::init_gaussian<T>({cfg.descriptor_dim, c2}, rng));
    p.aligned_proj_b = store.add("desc.aligned.proj.b",
                                 Tensor<T>::zeros({cfg.descriptor_dim}));
  }
  return p;
}

template <typename T>
Tensor<T> front_end(Tape<T>* tape, const TwoStreamParams<T>& params,
                    const Tensor<T>& frame) {
  const auto& cfg = params.cfg;
  if (frame.rank() != 3 || frame.shape()[0] != cfg.input_h ||
      frame.shape()[1] != cfg.input_w || frame.shape()[2] != cfg.input_c) {
    throw DimError("front_end: frame " + shape_str(frame.shape()) +
                   " does not match configured input " +
                   std::to_string(cfg.input_h) + "x" +
                   std::to_string(cfg.input_w) + "x" +
                   std::to_string(cfg.input_c));
  }
  return run_blocks(tape, params.front, frame);
}

template <typename T>
Tensor<T> tail(Tape<T>* tape, const TwoStreamParams<T>& params, Stream stream,
               const Tensor<T>& map) {
  const auto& blocks =
      stream == Stream::kMain ? params.main_tail : params.aligned_tail;
  return run_blocks(tape, blocks, map);
}

template <typename T>
Tensor<T> frame_descriptor(Tape<T>* tape, const TwoStreamParams<T>& params,
                           Stream stream, const Tensor<T>& x) {
  Tensor<T> pooled = nn::global_avg_pool(tape, x);
  const bool main_side = stream == Stream::kMain;
  return nn::fully_connected(
      tape, pooled, main_side ? params.main_proj_w : params.aligned_proj_w,
      main_side ? params.main_proj_b : params.aligned_proj_b);
}

#define TREID_BACKBONE_INSTANTIATE(T)                                        \
  template TwoStreamParams<T> make_two_stream_params<T>(                     \
      ParamStore<T>&, const BackboneConfig&, std::uint64_t);                 \
  template Tensor<T> front_end<T>(Tape<T>*, const TwoStreamParams<T>&,       \
                                  const Tensor<T>&);                         \
  template Tensor<T> tail<T>(Tape<T>*, const TwoStreamParams<T>&, Stream,    \
                             const Tensor<T>&);                              \
  template Tensor<T> frame_descriptor<T>(Tape<T>*, const TwoStreamParams<T>&, \
                                         Stream, const Tensor<T>&);

TREID_BACKBONE_INSTANTIATE(float)
TREID_BACKBONE_INSTANTIATE(double)
TREID_BACKBONE_INSTANTIATE(long double)
#undef TREID_BACKBONE_INSTANTIATE

}  // namespace treid
