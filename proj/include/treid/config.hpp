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
#ifndef TREID_CONFIG_HPP_
#define TREID_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include "treid/data_io.hpp"
#include "treid/evaluation.hpp"
#include "treid/model.hpp"
#include "treid/training.hpp"

namespace treid {

// Which identities a training run uses: the whole dataset, the fixed-split
// train half, or the train half of one half-split trial.
enum class TrainSplit { kAll, kFixed, kTrial };

// Flat key=value run configuration; see configs/ for annotated examples.
// Defaults follow the full-scale settings; desk presets override sizes.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  std::string data_root;
  std::size_t data_min_length = 1;

  data::SynthConfig synth;
  ModelConfig model;  // num_classes filled from the training identities
  train::TrainConfig train;

  TrainSplit train_split = TrainSplit::kAll;
  std::size_t train_trial = 0;

  eval::ProtocolConfig protocol;
  long eval_trial = -1;  // -1: all trials, averaged
  std::size_t eval_max_frames = 0;  // 0: whole sequence

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_string(const std::string& text,
                               const std::string& origin = "<string>");

  // Every key with its effective value, sorted, one per line.
  std::string canonical() const;
  std::uint64_t digest() const;

  void require(const std::string& key) const;  // errors if key is empty
};

}  // namespace treid

#endif  // TREID_CONFIG_HPP_
