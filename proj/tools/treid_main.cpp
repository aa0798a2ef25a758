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
#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "treid/commands.hpp"

namespace {

struct CommonArgs {
  std::string config;
  long long seed = -1;
  std::string out;
};

treid::RunConfig load_config(const CommonArgs& args) {
  treid::RunConfig cfg = treid::RunConfig::from_file(args.config);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (!args.out.empty()) cfg.out = args.out;
  cfg.synth.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  return cfg;
}

void add_common(CLI::App* app, CommonArgs& args) {
  app->add_option("--config", args.config, "run configuration file")
      ->required();
  app->add_option("--seed", args.seed, "override the config seed");
  app->add_option("--out", args.out, "override the output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stream video person re-identification at desk scale"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, grad_args, viz_args;

  CLI::App* gen = app.add_subcommand("gen", "render the synthetic dataset");
  add_common(gen, gen_args);

  CLI::App* train = app.add_subcommand("train", "two-stage training");
  add_common(train, train_args);
  std::string stage = "all";
  train->add_option("--stage", stage, "1, 2, or all")
      ->check(CLI::IsMember({"1", "2", "all"}));

  CLI::App* eval = app.add_subcommand("eval", "protocol evaluation");
  add_common(eval, eval_args);
  std::string eval_ckpt, protocol_override, cross_root;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")
      ->required();
  eval->add_option("--protocol", protocol_override, "fixed or half10")
      ->check(CLI::IsMember({"fixed", "half10"}));
  eval->add_option("--cross", cross_root,
                   "evaluate on this dataset root instead (cross-dataset)");

  CLI::App* grad =
      app.add_subcommand("gradcheck", "full-model finite-difference check");
  add_common(grad, grad_args);

  CLI::App* viz =
      app.add_subcommand("alignviz", "theta traces and aligned-map images");
  add_common(viz, viz_args);
  std::string viz_ckpt, sequence_id;
  viz->add_option("--checkpoint", viz_ckpt,
                  "checkpoint (omit for a freshly initialized model)");
  viz->add_option("--sequence", sequence_id, "sequence id, e.g. id_0003/cam_0/seq_001")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      treid::cmd::run_gen(load_config(gen_args), std::cout);
    } else if (train->parsed()) {
      const int stage_num = stage == "all" ? 0 : std::stoi(stage);
      treid::cmd::run_train(load_config(train_args), stage_num, std::cout);
    } else if (eval->parsed()) {
      treid::RunConfig cfg = load_config(eval_args);
      if (!protocol_override.empty()) {
        cfg.protocol.kind = treid::eval::protocol_from_string(protocol_override);
      }
      treid::cmd::run_eval(cfg, eval_ckpt, cross_root, std::cout);
    } else if (grad->parsed()) {
      return treid::cmd::run_gradcheck(load_config(grad_args), std::cout);
    } else if (viz->parsed()) {
      treid::cmd::run_alignviz(load_config(viz_args), viz_ckpt, sequence_id,
                               std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
