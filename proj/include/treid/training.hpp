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
#ifndef TREID_TRAINING_HPP_
#define TREID_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "treid/model.hpp"

namespace treid::train {

struct TrainConfig {
  double stage1_lr = 2e-4;
  std::size_t stage1_iters = 10000;
  double stage2_lr = 2e-5;
  std::size_t stage2_iters = 10000;
  std::size_t batch = 12;
  std::size_t frames = 10;  // consecutive frames sampled per sequence visit
  double clip = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t checkpoint_interval = 0;  // 0: checkpoints at stage ends only

  void validate() const;
};

// -log softmax(logits)[label], computed with max subtraction.
template <typename T>
Tensor<T> softmax_xent_loss(Tape<T>* tape, const Tensor<T>& logits,
                            std::size_t label);

// Elementwise clamp to [-bound, bound].
template <typename T>
void clip_gradients(std::span<T> grad, T bound);

// One standard Adam update with bias correction; t is 1-based.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, std::span<T> m,
               std::span<T> v, T lr, T beta1, T beta2, T eps, std::size_t t);

// Adam over a selected set of named parameter blocks. Gradient clipping is
// applied per block before each update.
template <typename T>
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::pair<std::string, Tensor<T>>> blocks,
                const TrainConfig& cfg);

  void step(double lr);

  std::size_t step_count() const { return t_; }
  void set_step_count(std::size_t t) { t_ = t; }

  struct Slot {
    std::string name;
    Tensor<T> param;
    Tensor<T> m, v;
  };
  const std::vector<Slot>& slots() const { return slots_; }
  std::vector<Slot>& slots() { return slots_; }

 private:
  std::vector<Slot> slots_;
  double clip_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

template <typename T>
struct TrainSequence {
  int label = 0;  // class index in [0, num_classes)
  std::vector<Tensor<T>> frames;
};

template <typename T>
struct TrainSet {
  std::vector<TrainSequence<T>> seqs;
  std::size_t num_classes = 0;
};

struct LogRow {
  std::size_t iteration = 0;  // 1-based within the stage
  int stage = 0;
  double loss = 0;
};

// Runs one training stage from `start_iter` (0-based; pass 0 for a fresh
// stage) to the configured iteration count. Stage 1 updates only the shared
// front-end, the transformer module and the temporary frame-level head under
// per-frame supervision; stage 2 updates everything except the frame head
// under sequence-level supervision of both streams. `on_step` fires after
// every iteration (logging, interval checkpoints).
template <typename T>
void run_stage(Model<T>& model, const TrainSet<T>& data,
               const TrainConfig& cfg, int stage, AdamOptimizer<T>& opt,
               std::size_t start_iter,
               const std::function<void(const LogRow&, AdamOptimizer<T>&)>&
                   on_step);

template <typename T>
AdamOptimizer<T> make_stage_optimizer(Model<T>& model, const TrainConfig& cfg,
                                      int stage);

template <typename T>
std::vector<LogRow> stage1_pretrain(Model<T>& model, const TrainSet<T>& data,
                                    const TrainConfig& cfg);

template <typename T>
std::vector<LogRow> stage2_joint_train(Model<T>& model,
                                       const TrainSet<T>& data,
                                       const TrainConfig& cfg);

// Checkpoint container: magic "RTRLCKPT", format version, config digest,
// then named parameter blocks in the tensor container format. Optimizer
// state and stage/iteration meta ride along as extra named blocks.
template <typename T>
struct Checkpoint {
  std::uint64_t config_digest = 0;
  std::vector<std::pair<std::string, Tensor<T>>> blocks;

  const Tensor<T>* find(const std::string& name) const;
  void add(const std::string& name, const Tensor<T>& t);
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint<T>& ckpt);

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

// Snapshot of model parameters (+ optimizer state when given).
template <typename T>
Checkpoint<T> snapshot(const Model<T>& model, std::uint64_t config_digest,
                       int stage, std::size_t iter,
                       const AdamOptimizer<T>* opt = nullptr);

// Restores parameter values (every model block must be present with a
// matching shape) and, when `opt` is given, optimizer state.
template <typename T>
void restore(Model<T>& model, const Checkpoint<T>& ckpt,
             AdamOptimizer<T>* opt = nullptr, int* stage = nullptr,
             std::size_t* iter = nullptr);

// Full-model gradient verification: 64-bit analytic gradients of a combined
// frame-level + sequence-level loss against per-coordinate central finite
// differences, per parameter block. The probe evaluations run in extended
// precision so the difference quotient stays meaningful for small gradient
// components. `corrupt_block` injects an error into that block's analytic
// gradient (negative-control fixture).
struct BlockCheck {
  std::string name;
  double max_err = 0;
};

struct GradCheckReport {
  std::vector<BlockCheck> blocks;
  double max_err = 0;
  std::string worst_block;
  bool passed(double tol) const { return max_err <= tol; }
};

GradCheckReport model_gradient_check(Model<double>& model,
                                     const std::vector<Tensor<double>>& frames,
                                     std::size_t label, double step,
                                     const std::string& corrupt_block = "");

}  // namespace treid::train

#endif  // TREID_TRAINING_HPP_
