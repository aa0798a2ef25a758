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
#include "treid/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "treid/rng.hpp"

namespace treid::eval {

namespace {

void check_instance(const std::vector<std::vector<double>>& distances,
                    const std::vector<int>& probe_ids,
                    const std::vector<int>& gallery_ids, int junk_id) {
  if (distances.size() != probe_ids.size()) {
    throw ProtocolError("distance matrix rows (" +
                        std::to_string(distances.size()) +
                        ") do not match probe count (" +
                        std::to_string(probe_ids.size()) + ")");
  }
  for (const auto& row : distances) {
    if (row.size() != gallery_ids.size()) {
      throw ProtocolError("distance matrix columns do not match gallery size");
    }
  }
  for (int pid : probe_ids) {
    bool found = false;
    for (int gid : gallery_ids) {
      if (gid == pid && gid != junk_id) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw ProtocolError("probe id " + std::to_string(pid) +
                          " has no gallery match");
    }
  }
}

// Gallery indices ranked by ascending distance, stable in gallery order,
// junk entries removed.
std::vector<std::size_t> ranked_gallery(const std::vector<double>& row,
                                        const std::vector<int>& gallery_ids,
                                        int junk_id) {
  std::vector<std::size_t> order;
  order.reserve(gallery_ids.size());
  for (std::size_t g = 0; g < gallery_ids.size(); ++g) {
    if (gallery_ids[g] != junk_id) order.push_back(g);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&row](std::size_t a, std::size_t b) {
                     return row[a] < row[b];
                   });
  return order;
}

}  // namespace

std::vector<double> cmc_curve(const std::vector<std::vector<double>>& distances,
                              const std::vector<int>& probe_ids,
                              const std::vector<int>& gallery_ids,
                              const std::vector<std::size_t>& ranks,
                              int junk_id) {
  check_instance(distances, probe_ids, gallery_ids, junk_id);
  for (std::size_t k : ranks) {
    if (k < 1) throw ProtocolError("cmc_curve: ranks must be >= 1");
  }
  std::vector<std::size_t> first_match(probe_ids.size());
  for (std::size_t p = 0; p < probe_ids.size(); ++p) {
    const auto order = ranked_gallery(distances[p], gallery_ids, junk_id);
    std::size_t pos = order.size();
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (gallery_ids[order[r]] == probe_ids[p]) {
        pos = r;
        break;
      }
    }
    first_match[p] = pos;
  }
  std::vector<double> out(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    std::size_t hits = 0;
    for (std::size_t pos : first_match) {
      if (pos < ranks[i]) ++hits;
    }
    out[i] = static_cast<double>(hits) /
             static_cast<double>(probe_ids.size());
  }
  return out;
}

double mean_average_precision(
    const std::vector<std::vector<double>>& distances,
    const std::vector<int>& probe_ids, const std::vector<int>& gallery_ids,
    int junk_id) {
  check_instance(distances, probe_ids, gallery_ids, junk_id);
  double sum_ap = 0;
  for (std::size_t p = 0; p < probe_ids.size(); ++p) {
    const auto order = ranked_gallery(distances[p], gallery_ids, junk_id);
    std::size_t true_seen = 0;
    double ap = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (gallery_ids[order[r]] == probe_ids[p]) {
        ++true_seen;
        ap += static_cast<double>(true_seen) / static_cast<double>(r + 1);
      }
    }
    sum_ap += ap / static_cast<double>(true_seen);
  }
  return sum_ap / static_cast<double>(probe_ids.size());
}

std::vector<SplitTrial> make_half_splits(const std::vector<int>& ids,
                                         std::size_t trials,
                                         std::uint64_t seed) {
  if (ids.size() < 2) {
    throw ProtocolError("make_half_splits: need at least 2 identities");
  }
  std::vector<int> sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<SplitTrial> out(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<int> shuffled = sorted;
    Rng rng = substream(seed, "splits", t);
    rng.shuffle(shuffled);
    const std::size_t half = shuffled.size() / 2;
    SplitTrial trial;
    trial.train_ids.assign(shuffled.begin(), shuffled.begin() + half);
    trial.test_ids.assign(shuffled.begin() + half, shuffled.end());
    std::sort(trial.train_ids.begin(), trial.train_ids.end());
    std::sort(trial.test_ids.begin(), trial.test_ids.end());
    out[t] = std::move(trial);
  }
  return out;
}

ProtocolKind protocol_from_string(const std::string& s) {
  if (s == "fixed") return ProtocolKind::kFixed;
  if (s == "half10") return ProtocolKind::kHalf10;
  throw ConfigError("unknown protocol '" + s + "' (expected fixed|half10)");
}

std::string to_string(ProtocolKind k) {
  return k == ProtocolKind::kFixed ? "fixed" : "half10";
}

double euclidean_distance(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw DimError("euclidean_distance: dimension mismatch " +
                   std::to_string(a.size()) + " vs " +
                   std::to_string(b.size()));
  }
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

struct GallerySel {
  std::vector<std::size_t> probe_idx, gallery_idx;
};

// Probes: every sequence of the lowest camera id among the test identities.
// Gallery: second camera; single-shot keeps the lexicographically first
// sequence per identity.
GallerySel select_probe_gallery(const data::DatasetIndex& index,
                                const std::vector<int>& test_ids,
                                bool single_shot) {
  std::set<int> cameras;
  for (const auto& s : index.seqs) cameras.insert(s.camera);
  if (cameras.size() < 2) {
    throw ProtocolError("protocol needs at least 2 cameras, found " +
                        std::to_string(cameras.size()));
  }
  const int probe_cam = *cameras.begin();
  const int gallery_cam = *std::next(cameras.begin());
  std::set<int> test(test_ids.begin(), test_ids.end());
  GallerySel sel;
  std::set<int> galleried;
  for (std::size_t i = 0; i < index.seqs.size(); ++i) {
    const auto& s = index.seqs[i];
    if (!test.count(s.identity)) continue;
    if (s.camera == probe_cam) {
      sel.probe_idx.push_back(i);
    } else if (s.camera == gallery_cam) {
      if (single_shot && galleried.count(s.identity)) continue;
      galleried.insert(s.identity);
      sel.gallery_idx.push_back(i);
    }
  }
  return sel;
}

EvalReport evaluate_selection(const data::DatasetIndex& index,
                              const GallerySel& sel,
                              const std::vector<std::vector<double>>& feats,
                              const ProtocolConfig& cfg) {
  EvalReport report;
  report.ranks = cfg.ranks;
  std::vector<int> probe_ids, gallery_ids;
  for (std::size_t i : sel.probe_idx) {
    probe_ids.push_back(index.seqs[i].identity);
  }
  for (std::size_t i : sel.gallery_idx) {
    gallery_ids.push_back(index.seqs[i].identity);
  }
  report.distances.resize(sel.probe_idx.size());
  for (std::size_t p = 0; p < sel.probe_idx.size(); ++p) {
    report.distances[p].resize(sel.gallery_idx.size());
    for (std::size_t g = 0; g < sel.gallery_idx.size(); ++g) {
      report.distances[p][g] = euclidean_distance(feats[sel.probe_idx[p]],
                                                  feats[sel.gallery_idx[g]]);
    }
  }
  report.cmc = cmc_curve(report.distances, probe_ids, gallery_ids, cfg.ranks,
                         cfg.junk_id);
  report.map = mean_average_precision(report.distances, probe_ids,
                                      gallery_ids, cfg.junk_id);
  return report;
}

}  // namespace

std::vector<EvalReport> run_protocol(const data::DatasetIndex& index,
                                     const FeatureFn& features,
                                     const ProtocolConfig& cfg,
                                     std::uint64_t seed) {
  if (index.seqs.empty()) throw ProtocolError("run_protocol: empty dataset");
  std::vector<int> ids;
  for (const auto& s : index.seqs) ids.push_back(s.identity);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) {
    throw ProtocolError("run_protocol: need at least 2 identities per split");
  }

  // Features computed once per sequence; lazily so fixed splits do not touch
  // train-half sequences.
  std::vector<std::vector<double>> feats(index.seqs.size());
  std::vector<bool> have(index.seqs.size(), false);
  auto feat_at = [&](std::size_t i) -> const std::vector<double>& {
    if (!have[i]) {
      feats[i] = features(index.seqs[i]);
      have[i] = true;
    }
    return feats[i];
  };

  std::vector<EvalReport> reports;
  if (cfg.kind == ProtocolKind::kHalf10) {
    const auto trials = make_half_splits(ids, cfg.trials, seed);
    for (std::size_t t = 0; t < trials.size(); ++t) {
      GallerySel sel = select_probe_gallery(index, trials[t].test_ids, true);
      for (std::size_t i : sel.probe_idx) feat_at(i);
      for (std::size_t i : sel.gallery_idx) feat_at(i);
      EvalReport r = evaluate_selection(index, sel, feats, cfg);
      r.trial = static_cast<int>(t);
      r.protocol = "half10";
      reports.push_back(std::move(r));
    }
  } else {
    // Fixed split: second half of the sorted identities is the test set.
    std::vector<int> test_ids(ids.begin() + ids.size() / 2, ids.end());
    GallerySel sel = select_probe_gallery(index, test_ids, false);
    for (std::size_t i : sel.probe_idx) feat_at(i);
    for (std::size_t i : sel.gallery_idx) feat_at(i);
    EvalReport r = evaluate_selection(index, sel, feats, cfg);
    r.trial = 0;
    r.protocol = "fixed";
    reports.push_back(std::move(r));
  }
  return reports;
}

EvalReport average_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ProtocolError("average_reports: no reports");
  EvalReport avg;
  avg.ranks = reports.front().ranks;
  avg.protocol = reports.front().protocol;
  avg.train_domain = reports.front().train_domain;
  avg.test_domain = reports.front().test_domain;
  avg.cmc.assign(avg.ranks.size(), 0.0);
  for (const auto& r : reports) {
    if (r.cmc.size() != avg.cmc.size()) {
      throw ProtocolError("average_reports: mismatched rank lists");
    }
    for (std::size_t i = 0; i < avg.cmc.size(); ++i) avg.cmc[i] += r.cmc[i];
    avg.map += r.map;
  }
  const double n = static_cast<double>(reports.size());
  for (double& v : avg.cmc) v /= n;
  avg.map /= n;
  return avg;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ContractError("pearson: input lengths differ or are empty");
  }
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace treid::eval
