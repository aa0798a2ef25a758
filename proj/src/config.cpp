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
#include "treid/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "treid/rng.hpp"

namespace treid {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct KeyValue {
  std::string value;
  std::size_t line;
};

std::map<std::string, KeyValue> parse_lines(const std::string& text,
                                            const std::string& origin) {
  std::map<std::string, KeyValue> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": empty key");
    }
    kv[key] = KeyValue{value, lineno};
  }
  return kv;
}

struct Reader {
  std::map<std::string, KeyValue> kv;
  std::string origin;

  std::string where(const KeyValue& v) const {
    return origin + ":" + std::to_string(v.line);
  }

  bool take_str(const std::string& key, std::string& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return false;
    out = it->second.value;
    kv.erase(it);
    return true;
  }

  template <typename F>
  void take(const std::string& key, F&& parse) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    const KeyValue v = it->second;
    kv.erase(it);
    try {
      parse(v.value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(where(v) + ": bad value for '" + key + "': " +
                        e.what());
    }
  }

  void finish() const {
    if (!kv.empty()) {
      const auto& [key, v] = *kv.begin();
      throw ConfigError(where(v) + ": unknown key '" + key + "'");
    }
  }
};

std::size_t to_size(const std::string& s) {
  std::size_t pos = 0;
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("not an integer: " + s);
  return static_cast<std::size_t>(v);
}

double to_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("not a number: " + s);
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("not a bool: " + s);
}

std::vector<std::size_t> to_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_size(item));
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string to_string(TrainSplit s) {
  switch (s) {
    case TrainSplit::kAll: return "all";
    case TrainSplit::kFixed: return "fixed";
    case TrainSplit::kTrial: return "trial";
  }
  return "?";
}

TrainSplit split_from_string(const std::string& s) {
  if (s == "all") return TrainSplit::kAll;
  if (s == "fixed") return TrainSplit::kFixed;
  if (s == "trial") return TrainSplit::kTrial;
  throw ConfigError("unknown train split '" + s + "' (expected all|fixed|trial)");
}

}  // namespace

RunConfig RunConfig::from_string(const std::string& text,
                                 const std::string& origin) {
  Reader r{parse_lines(text, origin), origin};
  RunConfig c;

  r.take("seed", [&](const std::string& v) { c.seed = to_size(v); });
  r.take_str("out", c.out);
  r.take_str("data.root", c.data_root);
  r.take("data.min_length",
         [&](const std::string& v) { c.data_min_length = to_size(v); });

  r.take("synth.identities",
         [&](const std::string& v) { c.synth.num_identities = to_size(v); });
  r.take("synth.cameras",
         [&](const std::string& v) { c.synth.cameras = to_size(v); });
  r.take("synth.seqs_per_id_per_cam", [&](const std::string& v) {
    c.synth.seqs_per_id_per_cam = to_size(v);
  });
  r.take("synth.frames",
         [&](const std::string& v) { c.synth.frames_per_seq = to_size(v); });
  r.take("synth.image",
         [&](const std::string& v) { c.synth.image_size = to_size(v); });
  r.take("synth.jitter_translation", [&](const std::string& v) {
    c.synth.jitter_translation = to_double(v);
  });
  r.take("synth.jitter_scale",
         [&](const std::string& v) { c.synth.jitter_scale = to_double(v); });
  r.take("synth.clutter",
         [&](const std::string& v) { c.synth.clutter_density = to_double(v); });
  r.take("synth.camera_shift",
         [&](const std::string& v) { c.synth.camera_shift = to_double(v); });
  r.take("synth.patch_extent",
         [&](const std::string& v) { c.synth.patch_extent = to_double(v); });

  r.take("backbone.input", [&](const std::string& v) {
    c.model.backbone.input_h = c.model.backbone.input_w = to_size(v);
  });
  r.take("backbone.channels",
         [&](const std::string& v) { c.model.backbone.input_c = to_size(v); });
  r.take("backbone.front_widths", [&](const std::string& v) {
    c.model.backbone.front_widths = to_size_list(v);
  });
  r.take("backbone.tail_widths", [&](const std::string& v) {
    c.model.backbone.tail_widths = to_size_list(v);
  });
  r.take("backbone.descriptor_dim", [&](const std::string& v) {
    c.model.backbone.descriptor_dim = to_size(v);
  });

  r.take("loc.width",
         [&](const std::string& v) { c.model.loc.width = to_size(v); });
  r.take("loc.hidden",
         [&](const std::string& v) { c.model.loc.hidden = to_size(v); });
  r.take("loc.dropout",
         [&](const std::string& v) { c.model.loc.dropout = to_double(v); });
  r.take("loc.pool",
         [&](const std::string& v) { c.model.loc.pool = to_bool(v); });

  r.take("trl.hidden",
         [&](const std::string& v) { c.model.trl_hidden = to_size(v); });

  r.take("model.cell", [&](const std::string& v) {
    c.model.cell = cell_kind_from_string(v);
  });
  r.take("model.align", [&](const std::string& v) {
    c.model.align = align_mode_from_string(v);
  });
  r.take("model.features", [&](const std::string& v) {
    c.model.features = feature_mode_from_string(v);
  });
  r.take("model.alpha",
         [&](const std::string& v) { c.model.alpha = to_double(v); });
  r.take("model.beta",
         [&](const std::string& v) { c.model.beta = to_double(v); });

  r.take("train.stage1_lr",
         [&](const std::string& v) { c.train.stage1_lr = to_double(v); });
  r.take("train.stage1_iters",
         [&](const std::string& v) { c.train.stage1_iters = to_size(v); });
  r.take("train.stage2_lr",
         [&](const std::string& v) { c.train.stage2_lr = to_double(v); });
  r.take("train.stage2_iters",
         [&](const std::string& v) { c.train.stage2_iters = to_size(v); });
  r.take("train.batch",
         [&](const std::string& v) { c.train.batch = to_size(v); });
  r.take("train.frames",
         [&](const std::string& v) { c.train.frames = to_size(v); });
  r.take("train.clip",
         [&](const std::string& v) { c.train.clip = to_double(v); });
  r.take("train.adam_beta1",
         [&](const std::string& v) { c.train.adam_beta1 = to_double(v); });
  r.take("train.adam_beta2",
         [&](const std::string& v) { c.train.adam_beta2 = to_double(v); });
  r.take("train.adam_eps",
         [&](const std::string& v) { c.train.adam_eps = to_double(v); });
  r.take("train.checkpoint_interval", [&](const std::string& v) {
    c.train.checkpoint_interval = to_size(v);
  });
  r.take("train.split", [&](const std::string& v) {
    c.train_split = split_from_string(v);
  });
  r.take("train.trial",
         [&](const std::string& v) { c.train_trial = to_size(v); });

  r.take("eval.protocol", [&](const std::string& v) {
    c.protocol.kind = eval::protocol_from_string(v);
  });
  r.take("eval.trials",
         [&](const std::string& v) { c.protocol.trials = to_size(v); });
  r.take("eval.ranks", [&](const std::string& v) {
    c.protocol.ranks = to_size_list(v);
  });
  r.take("eval.trial", [&](const std::string& v) {
    c.eval_trial = static_cast<long>(to_size(v));
  });
  r.take("eval.max_frames",
         [&](const std::string& v) { c.eval_max_frames = to_size(v); });

  r.finish();

  c.synth.seed = c.seed;
  c.train.seed = c.seed;
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_string(ss.str(), path.string());
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(seed);
  kv["out"] = out;
  kv["data.root"] = data_root;
  kv["data.min_length"] = std::to_string(data_min_length);
  kv["synth.identities"] = std::to_string(synth.num_identities);
  kv["synth.cameras"] = std::to_string(synth.cameras);
  kv["synth.seqs_per_id_per_cam"] = std::to_string(synth.seqs_per_id_per_cam);
  kv["synth.frames"] = std::to_string(synth.frames_per_seq);
  kv["synth.image"] = std::to_string(synth.image_size);
  kv["synth.jitter_translation"] = fmt_double(synth.jitter_translation);
  kv["synth.jitter_scale"] = fmt_double(synth.jitter_scale);
  kv["synth.clutter"] = fmt_double(synth.clutter_density);
  kv["synth.camera_shift"] = fmt_double(synth.camera_shift);
  kv["synth.patch_extent"] = fmt_double(synth.patch_extent);
  kv["backbone.input"] = std::to_string(model.backbone.input_h);
  kv["backbone.channels"] = std::to_string(model.backbone.input_c);
  kv["backbone.front_widths"] = fmt_list(model.backbone.front_widths);
  kv["backbone.tail_widths"] = fmt_list(model.backbone.tail_widths);
  kv["backbone.descriptor_dim"] =
      std::to_string(model.backbone.descriptor_dim);
  kv["loc.width"] = std::to_string(model.loc.width);
  kv["loc.hidden"] = std::to_string(model.loc.hidden);
  kv["loc.dropout"] = fmt_double(model.loc.dropout);
  kv["loc.pool"] = model.loc.pool ? "true" : "false";
  kv["trl.hidden"] = std::to_string(model.trl_hidden);
  kv["model.cell"] = treid::to_string(model.cell);
  kv["model.align"] = treid::to_string(model.align);
  kv["model.features"] = treid::to_string(model.features);
  kv["model.alpha"] = fmt_double(model.alpha);
  kv["model.beta"] = fmt_double(model.beta);
  kv["train.stage1_lr"] = fmt_double(train.stage1_lr);
  kv["train.stage1_iters"] = std::to_string(train.stage1_iters);
  kv["train.stage2_lr"] = fmt_double(train.stage2_lr);
  kv["train.stage2_iters"] = std::to_string(train.stage2_iters);
  kv["train.batch"] = std::to_string(train.batch);
  kv["train.frames"] = std::to_string(train.frames);
  kv["train.clip"] = fmt_double(train.clip);
  kv["train.adam_beta1"] = fmt_double(train.adam_beta1);
  kv["train.adam_beta2"] = fmt_double(train.adam_beta2);
  kv["train.adam_eps"] = fmt_double(train.adam_eps);
  kv["train.checkpoint_interval"] =
      std::to_string(train.checkpoint_interval);
  kv["train.split"] = to_string(train_split);
  kv["train.trial"] = std::to_string(train_trial);
  kv["eval.protocol"] = eval::to_string(protocol.kind);
  kv["eval.trials"] = std::to_string(protocol.trials);
  kv["eval.ranks"] = fmt_list(protocol.ranks);
  kv["eval.trial"] = std::to_string(eval_trial);
  kv["eval.max_frames"] = std::to_string(eval_max_frames);

  std::string out_text;
  for (const auto& [k, v] : kv) out_text += k + " = " + v + "\n";
  return out_text;
}

std::uint64_t RunConfig::digest() const {
  return detail::fnv1a64(canonical());
}

void RunConfig::require(const std::string& key) const {
  const bool ok = key == "data.root" ? !data_root.empty()
                  : key == "out"     ? !out.empty()
                                     : true;
  if (!ok) throw ConfigError("missing required key '" + key + "'");
}

}  // namespace treid
