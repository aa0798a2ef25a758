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
#include "treid/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace treid::cmd {

GenResult run_gen(const RunConfig& cfg, std::ostream& log) {
  cfg.require("data.root");
  data::synth_generate(cfg.synth, cfg.data_root);
  GenResult r;
  r.identities = cfg.synth.num_identities;
  r.sequences = cfg.synth.num_identities * cfg.synth.cameras *
                cfg.synth.seqs_per_id_per_cam;
  r.frames = r.sequences * cfg.synth.frames_per_seq;
  log << "generated " << r.identities << " identities, " << r.sequences
      << " sequences, " << r.frames << " frames under " << cfg.data_root
      << "\n";
  return r;
}

std::vector<int> train_identities(const RunConfig& cfg,
                                  const data::DatasetIndex& index) {
  std::set<int> id_set;
  for (const auto& s : index.seqs) id_set.insert(s.identity);
  std::vector<int> ids(id_set.begin(), id_set.end());
  switch (cfg.train_split) {
    case TrainSplit::kAll:
      return ids;
    case TrainSplit::kFixed:
      return {ids.begin(), ids.begin() + ids.size() / 2};
    case TrainSplit::kTrial: {
      auto trials =
          eval::make_half_splits(ids, cfg.protocol.trials, cfg.seed);
      if (cfg.train_trial >= trials.size()) {
        throw ConfigError("train.trial " + std::to_string(cfg.train_trial) +
                          " out of range for " +
                          std::to_string(trials.size()) + " trials");
      }
      return trials[cfg.train_trial].train_ids;
    }
  }
  return ids;
}

train::TrainSet<float> load_train_set(const data::DatasetIndex& index,
                                      const std::vector<int>& ids) {
  std::vector<int> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  train::TrainSet<float> set;
  set.num_classes = sorted.size();
  for (const auto& rec : index.seqs) {
    auto it = std::lower_bound(sorted.begin(), sorted.end(), rec.identity);
    if (it == sorted.end() || *it != rec.identity) continue;
    train::TrainSequence<float> seq;
    seq.label = static_cast<int>(it - sorted.begin());
    for (const auto& p : data::frame_paths(rec.path)) {
      seq.frames.push_back(data::image_read<float>(p));
    }
    if (!seq.frames.empty()) set.seqs.push_back(std::move(seq));
  }
  if (set.seqs.empty()) {
    throw ContractError("training set is empty after the split filter");
  }
  return set;
}

namespace {

void write_loss_rows(std::ofstream& f, const train::LogRow& row) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%zu,%d,%.9g\n", row.iteration, row.stage,
                row.loss);
  f << buf;
}

}  // namespace

TrainResult run_train(const RunConfig& cfg, int stage, std::ostream& log) {
  cfg.require("data.root");
  cfg.require("out");
  cfg.train.validate();
  const fs::path out_dir = cfg.out;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());

  data::DatasetIndex index =
      data::load_dataset(cfg.data_root, cfg.data_min_length);
  if (index.seqs.empty()) {
    throw ContractError("no sequences found under " + cfg.data_root);
  }
  const std::vector<int> ids = train_identities(cfg, index);
  train::TrainSet<float> data = load_train_set(index, ids);

  ModelConfig mc = cfg.model;
  mc.num_classes = data.num_classes;
  Model<float> model(mc, cfg.seed);
  const std::uint64_t digest = cfg.digest();

  TrainResult result;
  result.parameter_count = model.parameter_count();
  result.stage1_ckpt = out_dir / "stage1.ckpt";
  result.stage2_ckpt = out_dir / "stage2.ckpt";
  result.loss_log = out_dir / "loss_log.csv";
  log << "model parameters: " << result.parameter_count << "\n";

  // Resume point from a rolling checkpoint, when one exists.
  int resume_stage = 0;
  std::size_t resume_iter = 0;
  const fs::path latest = out_dir / "latest.ckpt";
  std::optional<train::Checkpoint<float>> resume_ckpt;
  if (fs::exists(latest)) {
    resume_ckpt = train::load_checkpoint<float>(latest);
    if (resume_ckpt->config_digest != digest) {
      throw ConfigError("latest.ckpt was produced by a different config");
    }
    const Tensor<float>* meta = resume_ckpt->find("meta.state");
    if (meta) {
      resume_stage = static_cast<int>(meta->value()[0]);
      resume_iter = static_cast<std::size_t>(meta->value()[1]);
    }
  }

  const bool fresh_log = !resume_ckpt.has_value();
  std::ofstream loss_file(result.loss_log,
                          fresh_log ? std::ios::trunc : std::ios::app);
  if (!loss_file) throw IoError("cannot write " + result.loss_log.string());
  if (fresh_log) loss_file << "iteration,stage,loss\n";

  auto run_one_stage = [&](int k, std::size_t start_iter,
                           train::AdamOptimizer<float>& opt) {
    const std::size_t max_iters =
        k == 1 ? cfg.train.stage1_iters : cfg.train.stage2_iters;
    train::run_stage<float>(
        model, data, cfg.train, k, opt, start_iter,
        [&](const train::LogRow& row, train::AdamOptimizer<float>& o) {
          write_loss_rows(loss_file, row);
          const bool interval =
              cfg.train.checkpoint_interval > 0 &&
              row.iteration % cfg.train.checkpoint_interval == 0;
          if (interval || row.iteration == max_iters) {
            train::save_checkpoint(
                latest, train::snapshot(model, digest, k, row.iteration, &o));
          }
        });
    loss_file.flush();
  };

  const bool want1 = stage == 0 || stage == 1;
  const bool want2 = stage == 0 || stage == 2;

  bool params_current = false;  // model holds the resumed parameter values
  if (want1 && resume_stage != 2) {
    auto opt = train::make_stage_optimizer(model, cfg.train, 1);
    std::size_t start_iter = 0;
    if (resume_ckpt && resume_stage == 1) {
      train::restore(model, *resume_ckpt, &opt);
      start_iter = resume_iter;
      params_current = true;
    }
    if (start_iter < cfg.train.stage1_iters) {
      run_one_stage(1, start_iter, opt);
    }
    train::save_checkpoint(
        result.stage1_ckpt,
        train::snapshot(model, digest, 1, cfg.train.stage1_iters, &opt));
    params_current = true;
    log << "stage 1 complete: " << result.stage1_ckpt << "\n";
  }

  if (want2) {
    // Stage 2 starts from the learned stage-1 parameters.
    auto opt = train::make_stage_optimizer(model, cfg.train, 2);
    std::size_t start_iter = 0;
    if (resume_ckpt && resume_stage == 2) {
      train::restore(model, *resume_ckpt, &opt);
      start_iter = resume_iter;
    } else if (!params_current) {
      if (!fs::exists(result.stage1_ckpt)) {
        throw ContractError("stage 2 requested but " +
                            result.stage1_ckpt.string() +
                            " is missing; run stage 1 first");
      }
      auto ck = train::load_checkpoint<float>(result.stage1_ckpt);
      if (ck.config_digest != digest) {
        throw ConfigError("stage1.ckpt was produced by a different config");
      }
      train::restore(model, ck);
    }
    if (start_iter < cfg.train.stage2_iters) {
      run_one_stage(2, start_iter, opt);
    }
    train::save_checkpoint(
        result.stage2_ckpt,
        train::snapshot(model, digest, 2, cfg.train.stage2_iters, &opt));
    log << "stage 2 complete: " << result.stage2_ckpt << "\n";
  }

  return result;
}

std::unique_ptr<Model<float>> load_model(const RunConfig& cfg,
                                         const fs::path& checkpoint) {
  ModelConfig mc = cfg.model;
  if (!checkpoint.empty()) {
    auto ck = train::load_checkpoint<float>(checkpoint);
    const Tensor<float>* head = ck.find("head.main.w");
    if (!head) {
      throw FormatError("checkpoint has no head.main.w block: " +
                        checkpoint.string());
    }
    mc.num_classes = head->shape()[0];
    auto model = std::make_unique<Model<float>>(mc, cfg.seed);
    train::restore(*model, ck);
    return model;
  }
  mc.num_classes = std::max<std::size_t>(mc.num_classes, 2);
  return std::make_unique<Model<float>>(mc, cfg.seed);
}

std::vector<double> sequence_feature(const Model<float>& model,
                                     const data::SeqRecord& rec,
                                     std::size_t max_frames) {
  std::vector<Tensor<float>> frames;
  for (const auto& p : data::frame_paths(rec.path)) {
    if (max_frames > 0 && frames.size() >= max_frames) break;
    frames.push_back(data::image_read<float>(p));
  }
  if (frames.empty()) {
    throw ContractError("sequence has no frames: " + rec.path);
  }
  ForwardOptions opts;
  opts.training = false;
  opts.sequence_heads = true;
  SequenceOutput<float> out = model.forward(nullptr, frames, opts, nullptr);
  return {out.g_fused.value().begin(), out.g_fused.value().end()};
}

EvalResult run_eval(const RunConfig& cfg, const fs::path& checkpoint,
                    const fs::path& cross_root, std::ostream& log) {
  cfg.require("data.root");
  const fs::path eval_root = cross_root.empty() ? fs::path(cfg.data_root)
                                                : cross_root;
  data::DatasetIndex index =
      data::load_dataset(eval_root, cfg.data_min_length);
  if (index.seqs.empty()) {
    throw ContractError("no sequences found under " + eval_root.string());
  }
  auto model = load_model(cfg, checkpoint);
  eval::FeatureFn features = [&](const data::SeqRecord& rec) {
    return sequence_feature(*model, rec, cfg.eval_max_frames);
  };

  std::vector<eval::EvalReport> reports =
      eval::run_protocol(index, features, cfg.protocol, cfg.seed);
  if (cfg.eval_trial >= 0) {
    if (static_cast<std::size_t>(cfg.eval_trial) >= reports.size()) {
      throw ConfigError("eval.trial out of range");
    }
    reports = {reports[static_cast<std::size_t>(cfg.eval_trial)]};
  }
  for (auto& r : reports) {
    r.train_domain = cfg.data_root;
    r.test_domain = eval_root.string();
  }
  EvalResult result;
  result.trials = reports;
  result.averaged = eval::average_reports(reports);
  result.averaged.train_domain = cfg.data_root;
  result.averaged.test_domain = eval_root.string();

  // Paper-style reporting columns.
  log << "protocol=" << result.averaged.protocol << " train="
      << result.averaged.train_domain << " test="
      << result.averaged.test_domain << "\n";
  log << "Rank-1 Rank-5 Rank-20 mAP\n";
  char line[128];
  auto rank_value = [&](std::size_t k) {
    for (std::size_t i = 0; i < result.averaged.ranks.size(); ++i) {
      if (result.averaged.ranks[i] == k) return result.averaged.cmc[i];
    }
    return std::nan("");
  };
  std::snprintf(line, sizeof line, "%.4f %.4f %.4f %.4f\n", rank_value(1),
                rank_value(5), rank_value(20), result.averaged.map);
  log << line;

  if (!cfg.out.empty()) {
    std::error_code ec;
    fs::create_directories(cfg.out, ec);
    result.csv = fs::path(cfg.out) / "eval.csv";
    std::ofstream f(result.csv);
    if (!f) throw IoError("cannot write " + result.csv.string());
    f << "rank,k-value\n";
    for (std::size_t i = 0; i < result.averaged.ranks.size(); ++i) {
      char row[64];
      std::snprintf(row, sizeof row, "%zu,%.9g\n", result.averaged.ranks[i],
                    result.averaged.cmc[i]);
      f << row;
    }
    char summary[160];
    std::snprintf(summary, sizeof summary,
                  "summary,%.9g,%.9g,%.9g,%.9g\n", rank_value(1),
                  rank_value(5), rank_value(20), result.averaged.map);
    f << summary;
  }
  return result;
}

int run_gradcheck(const RunConfig& cfg, std::ostream& log,
                  const std::string& corrupt_block) {
  // 64-bit mode, dropout disabled.
  ModelConfig mc = cfg.model;
  mc.loc.dropout = 0.0;
  mc.num_classes = std::max<std::size_t>(mc.num_classes, 2);
  Model<double> model(mc, cfg.seed);
  log << "gradcheck model parameters: " << model.parameter_count() << "\n";

  // Evaluate at a generic point: jittering every block moves theta off the
  // exact identity, where bilinear sampling sits on interpolation corners,
  // and gives the zero-initialized localization FC a gradient path.
  Rng jitter = substream(cfg.seed, "gradcheck/jitter");
  for (auto& [name, t] : model.params().blocks()) {
    for (auto& v : t.value()) v += 0.03 * jitter.uniform(-1.0, 1.0);
  }

  Rng rng = substream(cfg.seed, "gradcheck/input");
  std::vector<Tensor<double>> frames(2);
  for (auto& f : frames) {
    f = Tensor<double>::zeros(
        {mc.backbone.input_h, mc.backbone.input_w, mc.backbone.input_c});
    for (auto& v : f.value()) v = rng.uniform();
  }
  const double step = 1e-5;
  train::GradCheckReport report =
      train::model_gradient_check(model, frames, 0, step, corrupt_block);

  for (const auto& b : report.blocks) {
    char row[160];
    std::snprintf(row, sizeof row, "  %-28s max_rel_err %.3e\n",
                  b.name.c_str(), b.max_err);
    log << row;
  }
  const double tol = 1e-4;
  log << "worst block: " << report.worst_block << " (max_rel_err "
      << report.max_err << ", tolerance " << tol << ")\n";
  const bool ok = report.passed(tol);
  log << (ok ? "gradcheck PASS\n" : "gradcheck FAIL\n");
  return ok ? 0 : 1;
}

namespace {

// Channel-mean of a feature map rendered to a grayscale image, min-max
// normalized; constant maps render black.
template <typename T>
Tensor<T> render_map(const Tensor<T>& map) {
  const std::size_t h = map.shape()[0], w = map.shape()[1],
                    c = map.shape()[2];
  std::vector<T> gray(h * w, T(0));
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      gray[i] += map.value()[i * c + ch];
    }
    gray[i] /= static_cast<T>(c);
  }
  T lo = gray[0], hi = gray[0];
  for (T v : gray) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const T span = hi - lo;
  Tensor<T> img = Tensor<T>::zeros({h, w, 3});
  for (std::size_t i = 0; i < h * w; ++i) {
    const T v = span > T(0) ? (gray[i] - lo) / span : T(0);
    img.value()[i * 3] = v;
    img.value()[i * 3 + 1] = v;
    img.value()[i * 3 + 2] = v;
  }
  return img;
}

}  // namespace

AlignvizResult run_alignviz(const RunConfig& cfg, const fs::path& checkpoint,
                            const std::string& sequence_id,
                            std::ostream& log) {
  cfg.require("data.root");
  cfg.require("out");
  data::DatasetIndex index =
      data::load_dataset(cfg.data_root, cfg.data_min_length);
  const data::SeqRecord* rec = nullptr;
  for (const auto& s : index.seqs) {
    const bool suffix_match =
        s.path.size() >= sequence_id.size() &&
        s.path.compare(s.path.size() - sequence_id.size(), sequence_id.size(),
                       sequence_id) == 0;
    if (s.path == sequence_id || suffix_match) {
      rec = &s;
      break;
    }
  }
  if (!rec) {
    throw ContractError("unknown sequence id '" + sequence_id + "'");
  }

  auto model = load_model(cfg, checkpoint);
  std::vector<Tensor<float>> frames;
  for (const auto& p : data::frame_paths(rec->path)) {
    frames.push_back(data::image_read<float>(p));
  }
  ForwardOptions opts;
  opts.training = false;
  opts.sequence_heads = false;
  opts.keep_maps = true;
  SequenceOutput<float> out = model->forward(nullptr, frames, opts, nullptr);

  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  AlignvizResult result;
  result.theta_csv = fs::path(cfg.out) / "theta.csv";
  std::ofstream f(result.theta_csv);
  if (!f) throw IoError("cannot write " + result.theta_csv.string());
  f << "t,s_x,s_y,tau_x,tau_y\n";
  std::vector<double> tau_x, tau_y;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const TransformParams th = theta_row(out.theta, t);
    char row[160];
    std::snprintf(row, sizeof row, "%zu,%.9g,%.9g,%.9g,%.9g\n", t, th.sx,
                  th.sy, th.tx, th.ty);
    f << row;
    tau_x.push_back(th.tx);
    tau_y.push_back(th.ty);
  }

  for (std::size_t t = 0; t < frames.size(); ++t) {
    char name[64];
    std::snprintf(name, sizeof name, "original_%04zu.ppm", t);
    const fs::path orig = fs::path(cfg.out) / name;
    data::image_write(orig, render_map(out.y_frames[t]));
    result.images.push_back(orig);
    std::snprintf(name, sizeof name, "aligned_%04zu.ppm", t);
    const fs::path aligned = fs::path(cfg.out) / name;
    data::image_write(aligned, render_map(out.y_aligned_frames[t]));
    result.images.push_back(aligned);
  }

  const auto placements = data::load_placements(rec->path);
  if (placements.size() == frames.size()) {
    result.has_ground_truth = true;
    std::vector<double> gx, gy;
    for (const auto& p : placements) {
      gx.push_back(p.cx);
      gy.push_back(p.cy);
    }
    result.corr_x = eval::pearson(tau_x, gx);
    result.corr_y = eval::pearson(tau_y, gy);
    if (std::isfinite(result.corr_x) && std::isfinite(result.corr_y)) {
      char line[128];
      std::snprintf(line, sizeof line,
                    "corr(tau_x, true x-offset) = %.4f, corr(tau_y, true "
                    "y-offset) = %.4f\n",
                    result.corr_x, result.corr_y);
      log << line;
    } else {
      log << "corr(tau, true offset) = n/a (constant theta trace)\n";
    }
  }
  log << "wrote " << frames.size() << " theta rows and "
      << result.images.size() << " images under " << cfg.out << "\n";
  return result;
}

}  // namespace treid::cmd
