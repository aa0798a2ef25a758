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
#ifndef TREID_COMMANDS_HPP_
#define TREID_COMMANDS_HPP_

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "treid/config.hpp"

namespace treid::cmd {

namespace fs = std::filesystem;

struct GenResult {
  std::size_t identities = 0;
  std::size_t sequences = 0;
  std::size_t frames = 0;
};

// Renders the configured synthetic dataset under data.root.
GenResult run_gen(const RunConfig& cfg, std::ostream& log);

// Identities a run trains on, after the configured split.
std::vector<int> train_identities(const RunConfig& cfg,
                                  const data::DatasetIndex& index);

// Loads the frames of the selected training identities into memory; labels
// are indices into the sorted identity list.
train::TrainSet<float> load_train_set(const data::DatasetIndex& index,
                                      const std::vector<int>& ids);

struct TrainResult {
  fs::path stage1_ckpt;
  fs::path stage2_ckpt;
  fs::path loss_log;
  std::size_t parameter_count = 0;
};

// stage: 1, 2, or 0 for both. Stage 2 alone requires the stage-1
// checkpoint; an existing latest.ckpt resumes the interrupted stage.
TrainResult run_train(const RunConfig& cfg, int stage, std::ostream& log);

struct EvalResult {
  eval::EvalReport averaged;
  std::vector<eval::EvalReport> trials;
  fs::path csv;
};

// Evaluates a checkpoint under the configured protocol. `cross_root`
// switches the evaluated dataset (cross-dataset testing); empty means
// data.root.
EvalResult run_eval(const RunConfig& cfg, const fs::path& checkpoint,
                    const fs::path& cross_root, std::ostream& log);

// Builds a float model sized for the checkpoint's classifier heads and
// restores the parameter values.
std::unique_ptr<Model<float>> load_model(const RunConfig& cfg,
                                         const fs::path& checkpoint);

// Fused sequence representation of one on-disk sequence.
std::vector<double> sequence_feature(const Model<float>& model,
                                     const data::SeqRecord& rec,
                                     std::size_t max_frames);

// Full-model finite-difference verification in 64-bit with dropout off.
// Returns the process exit code (0 on pass). `corrupt_block` is the
// negative-control fixture hook.
int run_gradcheck(const RunConfig& cfg, std::ostream& log,
                  const std::string& corrupt_block = "");

struct AlignvizResult {
  fs::path theta_csv;
  std::vector<fs::path> images;
  bool has_ground_truth = false;
  double corr_x = 0, corr_y = 0;
};

// Writes the per-frame theta trace and the original/aligned map renderings
// of one sequence; reports the correlation between predicted translations
// and ground-truth placements when available. An empty checkpoint path uses
// a freshly initialized model.
AlignvizResult run_alignviz(const RunConfig& cfg, const fs::path& checkpoint,
                            const std::string& sequence_id, std::ostream& log);

}  // namespace treid::cmd

#endif  // TREID_COMMANDS_HPP_
