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
#include "treid/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "treid/data_io.hpp"

namespace treid::train {

void TrainConfig::validate() const {
  if (stage1_lr <= 0 || stage2_lr <= 0) {
    throw ConfigError("train: learning rates must be positive");
  }
  if (clip <= 0) throw ConfigError("train: clip bound must be positive");
  if (frames < 1) throw ConfigError("train: frames per sequence must be >= 1");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (adam_beta1 <= 0 || adam_beta1 >= 1 || adam_beta2 <= 0 ||
      adam_beta2 >= 1 || adam_eps <= 0) {
    throw ConfigError("train: bad Adam constants");
  }
}

template <typename T>
Tensor<T> softmax_xent_loss(Tape<T>* tape, const Tensor<T>& logits,
                            std::size_t label) {
  if (logits.rank() != 1) {
    throw DimError("softmax_xent_loss: expected rank-1 logits, got " +
                   shape_str(logits.shape()));
  }
  const std::size_t k = logits.shape()[0];
  if (label >= k) {
    throw ContractError("softmax_xent_loss: label " + std::to_string(label) +
                        " out of range for " + std::to_string(k) + " classes");
  }
  const T* z = logits.value().data();
  T zmax = z[0];
  for (std::size_t i = 1; i < k; ++i) zmax = std::max(zmax, z[i]);
  T sum = 0;
  for (std::size_t i = 0; i < k; ++i) sum += std::exp(z[i] - zmax);
  const T loss = std::log(sum) - (z[label] - zmax);
  bool track = tape && logits.requires_grad();
  Tensor<T> out = Tensor<T>::scalar(loss, track);
  if (track) {
    tape->record({out.node()}, [logits, out, label, zmax, sum, k]() {
      const T g = out.node()->grad[0];
      auto& dz = logits.node()->grad;
      for (std::size_t i = 0; i < k; ++i) {
        const T softmax_i = std::exp(logits.value()[i] - zmax) / sum;
        dz[i] += g * (softmax_i - (i == label ? T(1) : T(0)));
      }
    });
  }
  return out;
}

template <typename T>
void clip_gradients(std::span<T> grad, T bound) {
  if (!(bound > T(0))) {
    throw ContractError("clip_gradients: bound must be positive");
  }
  for (T& g : grad) g = std::clamp(g, -bound, bound);
}

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m,
               std::span<T> v, T lr, T beta1, T beta2, T eps, std::size_t t) {
  if (param.size() != grad.size() || param.size() != m.size() ||
      param.size() != v.size()) {
    throw DimError("adam_step: state sizes do not match parameter size");
  }
  if (t < 1) throw ContractError("adam_step: step count must be >= 1");
  const T bc1 = T(1) - std::pow(beta1, static_cast<T>(t));
  const T bc2 = T(1) - std::pow(beta2, static_cast<T>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * grad[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * grad[i] * grad[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

template <typename T>
AdamOptimizer<T>::AdamOptimizer(
    std::vector<std::pair<std::string, Tensor<T>>> blocks,
    const TrainConfig& cfg)
    : clip_(cfg.clip),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps) {
  for (auto& [name, t] : blocks) {
    Slot s;
    s.name = name;
    s.param = t;
    s.m = Tensor<T>::zeros(t.shape());
    s.v = Tensor<T>::zeros(t.shape());
    slots_.push_back(std::move(s));
  }
}

template <typename T>
void AdamOptimizer<T>::step(double lr) {
  ++t_;
  for (Slot& s : slots_) {
    clip_gradients<T>(s.param.grad(), static_cast<T>(clip_));
    adam_step<T>(s.param.value(), s.param.grad(), s.m.value(), s.v.value(),
                 static_cast<T>(lr), static_cast<T>(beta1_),
                 static_cast<T>(beta2_), static_cast<T>(eps_), t_);
  }
}

template <typename T>
AdamOptimizer<T> make_stage_optimizer(Model<T>& model, const TrainConfig& cfg,
                                      int stage) {
  std::vector<std::pair<std::string, Tensor<T>>> selected;
  for (auto& [name, t] : model.params().blocks()) {
    const bool in_stage =
        stage == 1 ? model.stage1_trainable(name)
                   : name.rfind("head.frame.", 0) != 0;
    if (in_stage) selected.emplace_back(name, t);
  }
  return AdamOptimizer<T>(std::move(selected), cfg);
}

namespace {

// Deterministic epoch-shuffled sampling: visit v maps to the perm slot
// v % N of epoch v / N. Window starts and dropout masks are derived from
// the visit index, so resumed runs replay the identical stream.
struct EpochSampler {
  std::uint64_t seed = 0;
  int stage = 0;
  std::size_t n = 0;
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> perm = {};

  std::size_t pick(std::size_t visit) {
    const std::size_t epoch = visit / n;
    if (epoch != cached_epoch) {
      perm.resize(n);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng rng = substream(seed, "sample/stage" + std::to_string(stage) +
                                    "/epoch",
                          epoch);
      rng.shuffle(perm);
      cached_epoch = epoch;
    }
    return perm[visit % n];
  }
};

template <typename T>
std::vector<Tensor<T>> sample_window(const TrainSequence<T>& seq,
                                     std::size_t t_len, Rng& rng) {
  const std::size_t len = seq.frames.size();
  std::size_t start = 0;
  if (len > t_len) start = rng.integer(len - t_len + 1);
  std::vector<Tensor<T>> out(t_len);
  for (std::size_t i = 0; i < t_len; ++i) {
    // Cyclic repetition extends sequences shorter than the window.
    out[i] = seq.frames[(start + i) % len];
  }
  return out;
}

}  // namespace

template <typename T>
void run_stage(Model<T>& model, const TrainSet<T>& data,
               const TrainConfig& cfg, int stage, AdamOptimizer<T>& opt,
               std::size_t start_iter,
               const std::function<void(const LogRow&, AdamOptimizer<T>&)>&
                   on_step) {
  cfg.validate();
  if (data.seqs.empty()) throw ContractError("run_stage: empty dataset");
  if (stage != 1 && stage != 2) {
    throw ContractError("run_stage: stage must be 1 or 2");
  }
  const std::size_t max_iters =
      stage == 1 ? cfg.stage1_iters : cfg.stage2_iters;
  const double lr = stage == 1 ? cfg.stage1_lr : cfg.stage2_lr;
  const std::string stage_tag = "stage" + std::to_string(stage);

  EpochSampler sampler{cfg.seed, stage, data.seqs.size()};
  ForwardOptions opts;
  opts.training = true;
  opts.frame_logits = stage == 1;
  opts.sequence_heads = stage == 2;

  for (std::size_t iter = start_iter; iter < max_iters; ++iter) {
    for (auto& [name, t] : model.params().blocks()) t.zero_grad();
    double batch_loss = 0;
    for (std::size_t j = 0; j < cfg.batch; ++j) {
      const std::size_t visit = iter * cfg.batch + j;
      const TrainSequence<T>& seq = data.seqs[sampler.pick(visit)];
      Rng window_rng =
          substream(cfg.seed, "sample/" + stage_tag + "/window", visit);
      std::vector<Tensor<T>> frames =
          sample_window(seq, cfg.frames, window_rng);
      Rng dropout_rng = substream(cfg.seed, "dropout/" + stage_tag, visit);

      Tape<T> tape;
      SequenceOutput<T> out = model.forward(&tape, frames, opts, &dropout_rng);
      Tensor<T> loss;
      if (stage == 1) {
        std::vector<Tensor<T>> frame_losses(frames.size());
        for (std::size_t t = 0; t < frames.size(); ++t) {
          frame_losses[t] = softmax_xent_loss(
              &tape, out.frame_logits[t],
              static_cast<std::size_t>(seq.label));
        }
        loss = ops::reduce_mean(&tape, ops::stack0(&tape, frame_losses), 0);
      } else {
        loss = ops::add(
            &tape,
            softmax_xent_loss(&tape, out.logits_main,
                              static_cast<std::size_t>(seq.label)),
            softmax_xent_loss(&tape, out.logits_aligned,
                              static_cast<std::size_t>(seq.label)));
      }
      batch_loss += static_cast<double>(loss.item());
      Tensor<T> scaled =
          ops::scale(&tape, loss, static_cast<T>(1.0 / cfg.batch));
      tape.backward(scaled);
    }
    opt.step(lr);
    LogRow row{iter + 1, stage, batch_loss / static_cast<double>(cfg.batch)};
    if (on_step) on_step(row, opt);
  }
}

template <typename T>
std::vector<LogRow> stage1_pretrain(Model<T>& model, const TrainSet<T>& data,
                                    const TrainConfig& cfg) {
  AdamOptimizer<T> opt = make_stage_optimizer(model, cfg, 1);
  std::vector<LogRow> rows;
  run_stage<T>(model, data, cfg, 1, opt, 0,
               [&rows](const LogRow& r, AdamOptimizer<T>&) {
                 rows.push_back(r);
               });
  return rows;
}

template <typename T>
std::vector<LogRow> stage2_joint_train(Model<T>& model,
                                       const TrainSet<T>& data,
                                       const TrainConfig& cfg) {
  AdamOptimizer<T> opt = make_stage_optimizer(model, cfg, 2);
  std::vector<LogRow> rows;
  run_stage<T>(model, data, cfg, 2, opt, 0,
               [&rows](const LogRow& r, AdamOptimizer<T>&) {
                 rows.push_back(r);
               });
  return rows;
}

template <typename T>
const Tensor<T>* Checkpoint<T>::find(const std::string& name) const {
  for (const auto& [n, t] : blocks) {
    if (n == name) return &t;
  }
  return nullptr;
}

template <typename T>
void Checkpoint<T>::add(const std::string& name, const Tensor<T>& t) {
  blocks.emplace_back(name, t);
}

namespace {

constexpr char kCkptMagic[8] = {'R', 'T', 'R', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint32_t read_u32(const std::string& buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i]))
         << (8 * i);
  }
  return v;
}
std::uint64_t read_u64_at(const std::string& buf, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + i]))
         << (8 * i);
  }
  return v;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint<T>& ckpt) {
  std::string buf;
  buf.append(kCkptMagic, 8);
  append_u32(buf, kCkptVersion);
  append_u64(buf, ckpt.config_digest);
  append_u32(buf, static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& [name, t] : ckpt.blocks) {
    append_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    data::tensor_to_bytes(t, buf);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  auto need = [&](std::size_t off, std::size_t n) {
    if (off + n > buf.size()) {
      throw FormatError("truncated checkpoint at byte offset " +
                        std::to_string(off) + " in " + path.string());
    }
  };
  need(0, 8);
  if (std::memcmp(buf.data(), kCkptMagic, 8) != 0) {
    throw FormatError("bad checkpoint magic at byte offset 0 in " +
                      path.string());
  }
  std::size_t off = 8;
  need(off, 4);
  const std::uint32_t version = read_u32(buf, off);
  off += 4;
  if (version != kCkptVersion) {
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version) + " in " + path.string());
  }
  Checkpoint<T> ckpt;
  need(off, 8);
  ckpt.config_digest = read_u64_at(buf, off);
  off += 8;
  need(off, 4);
  const std::uint32_t count = read_u32(buf, off);
  off += 4;
  for (std::uint32_t i = 0; i < count; ++i) {
    need(off, 4);
    const std::uint32_t name_len = read_u32(buf, off);
    off += 4;
    need(off, name_len);
    std::string name = buf.substr(off, name_len);
    off += name_len;
    ckpt.blocks.emplace_back(std::move(name),
                             data::tensor_from_bytes<T>(buf, off));
  }
  if (off != buf.size()) {
    throw FormatError("trailing bytes after checkpoint payload at offset " +
                      std::to_string(off) + " in " + path.string());
  }
  return ckpt;
}

namespace {

template <typename T>
Tensor<T> value_copy(const Tensor<T>& t) {
  return Tensor<T>::from(t.shape(), {t.value().begin(), t.value().end()});
}

}  // namespace

template <typename T>
Checkpoint<T> snapshot(const Model<T>& model, std::uint64_t config_digest,
                       int stage, std::size_t iter,
                       const AdamOptimizer<T>* opt) {
  Checkpoint<T> ckpt;
  ckpt.config_digest = config_digest;
  for (const auto& [name, t] : model.params().blocks()) {
    ckpt.add(name, value_copy(t));
  }
  Tensor<T> meta = Tensor<T>::zeros({3});
  meta.value()[0] = static_cast<T>(stage);
  meta.value()[1] = static_cast<T>(iter);
  meta.value()[2] = static_cast<T>(opt ? opt->step_count() : 0);
  ckpt.add("meta.state", meta);
  if (opt) {
    for (const auto& slot : opt->slots()) {
      ckpt.add("opt.m." + slot.name, value_copy(slot.m));
      ckpt.add("opt.v." + slot.name, value_copy(slot.v));
    }
  }
  return ckpt;
}

template <typename T>
void restore(Model<T>& model, const Checkpoint<T>& ckpt, AdamOptimizer<T>* opt,
             int* stage, std::size_t* iter) {
  for (auto& [name, t] : model.params().blocks()) {
    const Tensor<T>* src = ckpt.find(name);
    if (!src) {
      throw FormatError("checkpoint is missing parameter block '" + name +
                        "'");
    }
    if (!shape_eq(src->shape(), t.shape())) {
      throw DimError("checkpoint block '" + name + "' has shape " +
                     shape_str(src->shape()) + ", model expects " +
                     shape_str(t.shape()));
    }
    std::copy(src->value().begin(), src->value().end(), t.value().begin());
  }
  const Tensor<T>* meta = ckpt.find("meta.state");
  if (stage) *stage = meta ? static_cast<int>(meta->value()[0]) : 0;
  if (iter) *iter = meta ? static_cast<std::size_t>(meta->value()[1]) : 0;
  if (opt) {
    for (auto& slot : opt->slots()) {
      const Tensor<T>* m = ckpt.find("opt.m." + slot.name);
      const Tensor<T>* v = ckpt.find("opt.v." + slot.name);
      if (!m || !v) {
        throw FormatError("checkpoint is missing optimizer state for '" +
                          slot.name + "'");
      }
      std::copy(m->value().begin(), m->value().end(), slot.m.value().begin());
      std::copy(v->value().begin(), v->value().end(), slot.v.value().begin());
    }
    opt->set_step_count(meta ? static_cast<std::size_t>(meta->value()[2]) : 0);
  }
}

namespace {

// Combined objective touching every block: sequence-level supervision of
// both streams plus the frame-level head.
template <typename T>
Tensor<T> combined_loss(const Model<T>& model,
                        const std::vector<Tensor<T>>& frames,
                        std::size_t label, Tape<T>* tape) {
  ForwardOptions opts;
  opts.training = false;  // dropout off for verification
  opts.frame_logits = true;
  opts.sequence_heads = true;
  SequenceOutput<T> out = model.forward(tape, frames, opts, nullptr);
  Tensor<T> loss = ops::add(
      tape, softmax_xent_loss(tape, out.logits_main, label),
      softmax_xent_loss(tape, out.logits_aligned, label));
  std::vector<Tensor<T>> fl(out.frame_logits.size());
  for (std::size_t t = 0; t < fl.size(); ++t) {
    fl[t] = softmax_xent_loss(tape, out.frame_logits[t], label);
  }
  Tensor<T> frame_loss = ops::reduce_mean(tape, ops::stack0(tape, fl), 0);
  return ops::add(tape, loss, frame_loss);
}

}  // namespace

GradCheckReport model_gradient_check(Model<double>& model,
                                     const std::vector<Tensor<double>>& frames,
                                     std::size_t label, double step,
                                     const std::string& corrupt_block) {
  model.params().zero_grads();
  {
    Tape<double> tape;
    Tensor<double> loss = combined_loss(model, frames, label, &tape);
    if (!std::isfinite(loss.item())) {
      throw NumericError("model_gradient_check: nonfinite loss");
    }
    tape.backward(loss);
  }

  // Extended-precision mirror for the probe evaluations. Parameter values
  // cast losslessly; the probes approximate the exact real-valued function.
  Model<long double> probe(model.config(), 0);
  {
    auto& src = model.params().blocks();
    auto& dst = probe.params().blocks();
    for (std::size_t b = 0; b < src.size(); ++b) {
      for (std::size_t i = 0; i < src[b].second.size(); ++i) {
        dst[b].second.value()[i] =
            static_cast<long double>(src[b].second.value()[i]);
      }
    }
  }
  std::vector<Tensor<long double>> probe_frames(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    probe_frames[i] = Tensor<long double>::zeros(frames[i].shape());
    for (std::size_t j = 0; j < frames[i].size(); ++j) {
      probe_frames[i].value()[j] =
          static_cast<long double>(frames[i].value()[j]);
    }
  }
  const long double h = static_cast<long double>(step);

  GradCheckReport report;
  auto& model_blocks = model.params().blocks();
  auto& probe_blocks = probe.params().blocks();
  for (std::size_t b = 0; b < model_blocks.size(); ++b) {
    const auto& [name, t] = model_blocks[b];
    Tensor<long double>& pt = probe_blocks[b].second;
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    if (name == corrupt_block && !analytic.empty()) {
      analytic[0] += 0.01;
    }
    BlockCheck bc;
    bc.name = name;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const long double saved = pt.value()[i];
      Tape<long double>* no_tape = nullptr;
      pt.value()[i] = saved + h;
      const long double fp =
          combined_loss(probe, probe_frames, label, no_tape).item();
      pt.value()[i] = saved - h;
      const long double fm =
          combined_loss(probe, probe_frames, label, no_tape).item();
      pt.value()[i] = saved;
      const double numeric = static_cast<double>((fp - fm) / (2.0L * h));
      bc.max_err =
          std::max(bc.max_err, relative_error(analytic[i], numeric));
    }
    if (bc.max_err > report.max_err) {
      report.max_err = bc.max_err;
      report.worst_block = bc.name;
    }
    report.blocks.push_back(std::move(bc));
  }
  return report;
}

#define TREID_TRAIN_INSTANTIATE(T)                                            \
  template Tensor<T> softmax_xent_loss<T>(Tape<T>*, const Tensor<T>&,         \
                                          std::size_t);                       \
  template void clip_gradients<T>(std::span<T>, T);                           \
  template void adam_step<T>(std::span<T>, std::span<const T>, std::span<T>,  \
                             std::span<T>, T, T, T, T, std::size_t);          \
  template class AdamOptimizer<T>;                                            \
  template AdamOptimizer<T> make_stage_optimizer<T>(Model<T>&,                \
                                                    const TrainConfig&, int); \
  template void run_stage<T>(                                                 \
      Model<T>&, const TrainSet<T>&, const TrainConfig&, int,                 \
      AdamOptimizer<T>&, std::size_t,                                         \
      const std::function<void(const LogRow&, AdamOptimizer<T>&)>&);          \
  template std::vector<LogRow> stage1_pretrain<T>(                            \
      Model<T>&, const TrainSet<T>&, const TrainConfig&);                     \
  template std::vector<LogRow> stage2_joint_train<T>(                         \
      Model<T>&, const TrainSet<T>&, const TrainConfig&);                     \
  template struct Checkpoint<T>;                                              \
  template void save_checkpoint<T>(const std::filesystem::path&,              \
                                   const Checkpoint<T>&);                     \
  template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path&);    \
  template Checkpoint<T> snapshot<T>(const Model<T>&, std::uint64_t, int,     \
                                     std::size_t, const AdamOptimizer<T>*);   \
  template void restore<T>(Model<T>&, const Checkpoint<T>&,                   \
                           AdamOptimizer<T>*, int*, std::size_t*);

TREID_TRAIN_INSTANTIATE(float)
TREID_TRAIN_INSTANTIATE(double)
#undef TREID_TRAIN_INSTANTIATE

}  // namespace treid::train
