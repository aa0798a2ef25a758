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
#include "treid/model.hpp"

namespace treid {

std::string to_string(AlignMode m) {
  switch (m) {
    case AlignMode::kNone: return "none";
    case AlignMode::kStn: return "stn";
    case AlignMode::kSt2n: return "st2n";
  }
  return "?";
}

std::string to_string(CellKind c) {
  return c == CellKind::kLstm ? "lstm" : "bilstm";
}

std::string to_string(FeatureMode f) {
  switch (f) {
    case FeatureMode::kGeneric: return "generic";
    case FeatureMode::kSpecific: return "specific";
    case FeatureMode::kBoth: return "both";
  }
  return "?";
}

AlignMode align_mode_from_string(const std::string& s) {
  if (s == "none") return AlignMode::kNone;
  if (s == "stn") return AlignMode::kStn;
  if (s == "st2n") return AlignMode::kSt2n;
  throw ConfigError("unknown alignment mode '" + s + "'");
}

CellKind cell_kind_from_string(const std::string& s) {
  if (s == "lstm") return CellKind::kLstm;
  if (s == "bilstm") return CellKind::kBiLstm;
  throw ConfigError("unknown temporal cell '" + s + "'");
}

FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "generic") return FeatureMode::kGeneric;
  if (s == "specific") return FeatureMode::kSpecific;
  if (s == "both") return FeatureMode::kBoth;
  throw ConfigError("unknown feature mode '" + s + "'");
}

void ModelConfig::validate() const {
  backbone.validate();
  if (alpha < 0.0 || alpha > 1.0) {
    throw ConfigError("model: alpha must lie in [0, 1]");
  }
  if (beta < 0.0 || beta > 1.0) {
    throw ConfigError("model: beta must lie in [0, 1]");
  }
  if (trl_hidden == 0) throw ConfigError("model: trl_hidden == 0");
  if (num_classes < 1) throw ConfigError("model: num_classes < 1");
  if (align != AlignMode::kNone) {
    const std::size_t h2 = backbone.tail_out_h(), w2 = backbone.tail_out_w();
    if (loc.pool && (h2 % 2 != 0 || w2 % 2 != 0)) {
      throw ConfigError(
          "model: localization pooling needs even high-level map dims (" +
          std::to_string(h2) + "x" + std::to_string(w2) +
          "); set loc.pool = false for tiny inputs");
    }
  }
}

namespace {

template <typename T>
nn::LstmParams<T> make_named_lstm(ParamStore<T>& store,
                                  const std::string& prefix,
                                  std::size_t input_dim, std::size_t hidden,
                                  std::uint64_t seed) {
  nn::LstmParams<T> p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  {
    Rng rng = substream(seed, "init/" + prefix + ".wx");
    p.wx = store.add(prefix + ".wx",
                     nn::init_orthogonal<T>(4 * hidden, input_dim, rng));
  }
  {
    Rng rng = substream(seed, "init/" + prefix + ".wh");
    p.wh = store.add(prefix + ".wh",
                     nn::init_orthogonal<T>(4 * hidden, hidden, rng));
  }
  Tensor<T> b = Tensor<T>::zeros({4 * hidden});
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b.value()[i] = T(1);
  p.b = store.add(prefix + ".b", b);
  return p;
}

template <typename T>
StreamParams<T> make_stream_params(ParamStore<T>& store,
                                   const std::string& name,
                                   const ModelConfig& cfg,
                                   std::uint64_t seed) {
  StreamParams<T> s;
  const std::size_t d = cfg.backbone.descriptor_dim;
  const std::size_t h = cfg.trl_hidden;
  const bool bi = cfg.cell == CellKind::kBiLstm;
  s.lstm1.fw = make_named_lstm(store, "trl." + name + ".lstm1.fw", d, h, seed);
  if (bi) {
    s.lstm1.bw =
        make_named_lstm(store, "trl." + name + ".lstm1.bw", d, h, seed);
  }
  s.has_lstm2 = cfg.features != FeatureMode::kGeneric;
  if (s.has_lstm2) {
    const std::size_t rdim = cfg.stream_dim();
    s.lstm2.fw =
        make_named_lstm(store, "trl." + name + ".lstm2.fw", rdim, h, seed);
    if (bi) {
      s.lstm2.bw =
          make_named_lstm(store, "trl." + name + ".lstm2.bw", rdim, h, seed);
    }
  }
  {
    Rng rng = substream(seed, "init/head." + name + ".w");
    s.head_w = store.add(
        "head." + name + ".w",
        nn::init_gaussian<T>({cfg.num_classes, cfg.stream_dim()}, rng));
    s.head_b =
        store.add("head." + name + ".b", Tensor<T>::zeros({cfg.num_classes}));
  }
  return s;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  backbone_ = make_two_stream_params<T>(store_, cfg_.backbone, seed);
  if (cfg_.align != AlignMode::kNone) {
    cfg_.loc.temporal = cfg_.align == AlignMode::kSt2n;
    st2n_ = make_st2n_params<T>(store_, cfg_.loc, cfg_.backbone.tail_out_c(),
                                seed);
    has_st2n_ = true;
  }
  main_ = make_stream_params<T>(store_, "main", cfg_, seed);
  aligned_ = make_stream_params<T>(store_, "aligned", cfg_, seed);
  {
    Rng rng = substream(seed, "init/head.frame.w");
    frame_head_w_ = store_.add(
        "head.frame.w",
        nn::init_gaussian<T>({cfg_.num_classes, cfg_.backbone.front_out_c()},
                             rng));
    frame_head_b_ =
        store_.add("head.frame.b", Tensor<T>::zeros({cfg_.num_classes}));
  }
}

template <typename T>
const St2nParams<T>& Model<T>::st2n() const {
  if (!has_st2n_) {
    throw ContractError("st2n(): model built with alignment = none");
  }
  return st2n_;
}

template <typename T>
bool Model<T>::stage1_trainable(const std::string& name) const {
  return name.rfind("frontend.", 0) == 0 || name.rfind("st2n.", 0) == 0 ||
         name.rfind("head.frame.", 0) == 0;
}

template <typename T>
Tensor<T> Model<T>::stream_feature(Tape<T>* tape, const Tensor<T>& f_seq,
                                   const StreamParams<T>& stream,
                                   Tensor<T>* residual_out) const {
  const bool bi = cfg_.cell == CellKind::kBiLstm;
  Tensor<T> g1_seq = bi ? nn::bilstm_forward(tape, f_seq, stream.lstm1)
                        : nn::lstm_forward(tape, f_seq, stream.lstm1.fw);
  Tensor<T> gbar1 = ops::reduce_mean(tape, g1_seq, 0);
  if (cfg_.features == FeatureMode::kGeneric) return gbar1;

  Tensor<T> residuals = trl::residual_sequence(tape, g1_seq, gbar1);
  if (residual_out) *residual_out = residuals;
  Tensor<T> g2_seq = bi ? nn::bilstm_forward(tape, residuals, stream.lstm2)
                        : nn::lstm_forward(tape, residuals, stream.lstm2.fw);
  Tensor<T> gbar2 = ops::reduce_mean(tape, g2_seq, 0);
  if (cfg_.features == FeatureMode::kSpecific) return gbar2;
  return trl::fuse_stream(tape, gbar1, gbar2, cfg_.alpha);
}

template <typename T>
SequenceOutput<T> Model<T>::forward(Tape<T>* tape,
                                    const std::vector<Tensor<T>>& frames,
                                    const ForwardOptions& opts,
                                    Rng* dropout_rng) const {
  if (frames.empty()) throw ContractError("forward: empty sequence");
  const std::size_t t_len = frames.size();
  SequenceOutput<T> out;

  std::vector<Tensor<T>> y(t_len), x_main(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    y[t] = front_end(tape, backbone_, frames[t]);
    x_main[t] = tail(tape, backbone_, Stream::kMain, y[t]);
  }

  std::vector<Tensor<T>> y_hat(t_len);
  if (has_st2n_) {
    Tensor<T> y_seq = ops::stack0(tape, y);
    Tensor<T> x_seq = ops::stack0(tape, x_main);
    Tensor<T> aligned_seq =
        align_sequence(tape, st2n_, y_seq, x_seq, opts.training, dropout_rng,
                       &out.theta);
    for (std::size_t t = 0; t < t_len; ++t) {
      y_hat[t] = ops::select0(tape, aligned_seq, t);
    }
  } else {
    y_hat = y;
    Tensor<T> theta = Tensor<T>::zeros({t_len, 4});
    for (std::size_t t = 0; t < t_len; ++t) {
      theta.value()[t * 4 + 0] = T(1);
      theta.value()[t * 4 + 1] = T(1);
    }
    out.theta = theta;
  }

  if (opts.frame_logits) {
    out.frame_logits.resize(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      Tensor<T> pooled = nn::global_avg_pool(tape, y_hat[t]);
      out.frame_logits[t] =
          nn::fully_connected(tape, pooled, frame_head_w_, frame_head_b_);
    }
  }

  if (opts.sequence_heads) {
    std::vector<Tensor<T>> f_main(t_len), f_aligned(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      f_main[t] = frame_descriptor(tape, backbone_, Stream::kMain, x_main[t]);
      Tensor<T> x_al = tail(tape, backbone_, Stream::kAligned, y_hat[t]);
      f_aligned[t] =
          frame_descriptor(tape, backbone_, Stream::kAligned, x_al);
    }
    Tensor<T> f_main_seq = ops::stack0(tape, f_main);
    Tensor<T> f_aligned_seq = ops::stack0(tape, f_aligned);
    out.g_main =
        stream_feature(tape, f_main_seq, main_, &out.residual_main);
    out.g_aligned =
        stream_feature(tape, f_aligned_seq, aligned_, &out.residual_aligned);
    out.logits_main =
        nn::fully_connected(tape, out.g_main, main_.head_w, main_.head_b);
    out.logits_aligned = nn::fully_connected(tape, out.g_aligned,
                                             aligned_.head_w, aligned_.head_b);
    out.g_fused = trl::fuse_overall(tape, out.g_main, out.g_aligned, cfg_.beta);
  }

  if (opts.keep_maps) {
    out.y_frames = y;
    out.y_aligned_frames = y_hat;
  }
  return out;
}

template class Model<float>;
template class Model<double>;
template class Model<long double>;

}  // namespace treid
