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
#ifndef TREID_MODEL_HPP_
#define TREID_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "treid/backbone.hpp"
#include "treid/st2n.hpp"
#include "treid/trl.hpp"

namespace treid {

enum class AlignMode { kNone, kStn, kSt2n };
enum class CellKind { kLstm, kBiLstm };
enum class FeatureMode { kGeneric, kSpecific, kBoth };

std::string to_string(AlignMode m);
std::string to_string(CellKind c);
std::string to_string(FeatureMode f);
AlignMode align_mode_from_string(const std::string& s);
CellKind cell_kind_from_string(const std::string& s);
FeatureMode feature_mode_from_string(const std::string& s);

struct ModelConfig {
  BackboneConfig backbone;
  LocalizationConfig loc;
  std::size_t trl_hidden = 512;
  AlignMode align = AlignMode::kSt2n;
  CellKind cell = CellKind::kBiLstm;
  FeatureMode features = FeatureMode::kBoth;
  double alpha = 0.5;
  double beta = 0.5;
  std::size_t num_classes = 2;

  void validate() const;
  // Dimension of a per-stream fused feature vector.
  std::size_t stream_dim() const {
    return cell == CellKind::kBiLstm ? 2 * trl_hidden : trl_hidden;
  }
  // Dimension of the overall fused representation.
  std::size_t fused_dim() const { return 2 * stream_dim(); }
};

// TRL parameters of one stream plus its sequence-level classifier. The two
// streams never share these; only the backbone front-end is shared.
template <typename T>
struct StreamParams {
  nn::BiLstmParams<T> lstm1;
  nn::BiLstmParams<T> lstm2;  // absent in generic-only feature mode
  bool has_lstm2 = false;
  Tensor<T> head_w, head_b;
};

template <typename T>
struct SequenceOutput {
  Tensor<T> g_fused;    // overall representation (fused_dim)
  Tensor<T> g_main;     // per-stream fused vector (stream_dim)
  Tensor<T> g_aligned;  // per-stream fused vector (stream_dim)
  Tensor<T> logits_main, logits_aligned;  // sequence-level heads
  Tensor<T> theta;  // [T,4]; identity rows when alignment is off
  std::vector<Tensor<T>> frame_logits;        // stage-1 head, when requested
  std::vector<Tensor<T>> y_frames;            // low-level maps
  std::vector<Tensor<T>> y_aligned_frames;    // transformed low-level maps
  Tensor<T> residual_main, residual_aligned;  // [T, stream_dim] (diagnostics)
};

struct ForwardOptions {
  bool training = false;
  bool frame_logits = false;
  bool sequence_heads = true;
  bool keep_maps = false;
};

// The full two-stream network. Parameter blocks live in an ordered registry
// whose names are stable across ablation flags, so checkpoints interoperate
// between configurations that share structure.
template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  SequenceOutput<T> forward(Tape<T>* tape,
                            const std::vector<Tensor<T>>& frames,
                            const ForwardOptions& opts,
                            Rng* dropout_rng = nullptr) const;

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }

  const TwoStreamParams<T>& backbone() const { return backbone_; }
  const St2nParams<T>& st2n() const;

  // Stage-1 pre-training updates the shared front-end, the transformer
  // module, and the temporary frame-level head; everything else is frozen.
  bool stage1_trainable(const std::string& name) const;

  std::size_t parameter_count() const { return store_.total_size(); }

 private:
  Tensor<T> stream_feature(Tape<T>* tape, const Tensor<T>& f_seq,
                           const StreamParams<T>& stream,
                           Tensor<T>* residual_out) const;

  ModelConfig cfg_;
  ParamStore<T> store_;
  TwoStreamParams<T> backbone_;
  St2nParams<T> st2n_;
  bool has_st2n_ = false;
  StreamParams<T> main_, aligned_;
  Tensor<T> frame_head_w_, frame_head_b_;
};

}  // namespace treid

#endif  // TREID_MODEL_HPP_
