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
#ifndef TREID_EVALUATION_HPP_
#define TREID_EVALUATION_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "treid/data_io.hpp"

namespace treid::eval {

// Gallery id reserved for distractor entries: never a correct match, and
// dropped from ranked lists (the cited protocols ignore junk entries).
constexpr int kNoJunkId = std::numeric_limits<int>::min();

struct EvalReport {
  std::vector<std::vector<double>> distances;  // probes x gallery
  std::vector<std::size_t> ranks;
  std::vector<double> cmc;  // one value per requested rank
  double map = 0.0;
  int trial = 0;
  std::string protocol;
  std::string train_domain, test_domain;
};

// CMC(k): fraction of probes whose nearest same-id gallery entry occurs
// within the top k by ascending distance; ties broken by stable gallery
// order. Every probe id must appear in the gallery.
std::vector<double> cmc_curve(const std::vector<std::vector<double>>& distances,
                              const std::vector<int>& probe_ids,
                              const std::vector<int>& gallery_ids,
                              const std::vector<std::size_t>& ranks,
                              int junk_id = kNoJunkId);

// Per probe: AP = mean over true matches of (true matches at or above that
// rank) / rank; mAP = mean over probes.
double mean_average_precision(const std::vector<std::vector<double>>& distances,
                              const std::vector<int>& probe_ids,
                              const std::vector<int>& gallery_ids,
                              int junk_id = kNoJunkId);

struct SplitTrial {
  std::vector<int> train_ids, test_ids;  // disjoint identity halves
};

// 10-trial half splits at the identity level (floor(n/2) train ids).
std::vector<SplitTrial> make_half_splits(const std::vector<int>& ids,
                                         std::size_t trials,
                                         std::uint64_t seed);

enum class ProtocolKind { kFixed, kHalf10 };

struct ProtocolConfig {
  ProtocolKind kind = ProtocolKind::kHalf10;
  std::size_t trials = 10;
  std::vector<std::size_t> ranks = {1, 5, 20};
  int junk_id = kNoJunkId;
};

ProtocolKind protocol_from_string(const std::string& s);
std::string to_string(ProtocolKind k);

using FeatureFn =
    std::function<std::vector<double>(const data::SeqRecord&)>;

// Applies the evaluation protocol to a dataset through a feature extractor.
// Probes are the sequences of the lowest camera id, the gallery comes from
// the second camera: single-shot (first sequence per identity) for the
// half-split protocol, every sequence for the fixed split. Half-split
// evaluates the test half of each of the `trials` identity splits; fixed
// split evaluates the lexicographic second half of the identities once.
std::vector<EvalReport> run_protocol(const data::DatasetIndex& index,
                                     const FeatureFn& features,
                                     const ProtocolConfig& cfg,
                                     std::uint64_t seed);

// Arithmetic mean of per-trial reports (distances are dropped).
EvalReport average_reports(const std::vector<EvalReport>& reports);

double euclidean_distance(const std::vector<double>& a,
                          const std::vector<double>& b);

// Pearson correlation; NaN for constant inputs.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace treid::eval

#endif  // TREID_EVALUATION_HPP_
