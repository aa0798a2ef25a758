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
#ifndef TREID_DATA_IO_HPP_
#define TREID_DATA_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "treid/tensor.hpp"

namespace treid::data {

// Synthetic tracklet generator. Each identity owns a deterministic texture
// patch rendered onto a cluttered background; the patch placement follows a
// bounded random walk in translation and scale, and camera 2 applies a
// configurable appearance shift. Ground-truth placements are written next
// to the frames for alignment diagnostics.
struct SynthConfig {
  std::size_t num_identities = 20;
  std::size_t cameras = 2;
  std::size_t seqs_per_id_per_cam = 4;
  std::size_t frames_per_seq = 10;
  std::size_t image_size = 64;
  double jitter_translation = 0.15;  // per-step max drift, normalized units
  double jitter_scale = 0.1;
  double clutter_density = 0.5;    // expected distractor blobs per 32x32 area
  double camera_shift = 0.25;      // cross-camera appearance shift strength
  double patch_extent = 0.45;      // patch half-size as a fraction of image
  std::uint64_t seed = 0;

  void validate() const;
};

struct SeqRecord {
  int identity = 0;
  int camera = 0;
  std::string path;  // directory holding frame_%04d.ppm
  std::size_t frames = 0;
};

struct DatasetIndex {
  std::vector<SeqRecord> seqs;
};

// Per-frame ground-truth patch placement in normalized coordinates.
struct Placement {
  double cx = 0, cy = 0, scale = 1;
};

// Renders the configured dataset under `root` (layout:
// root/id_XXXX/cam_X/seq_XXX/frame_XXXX.ppm plus placement.csv).
void synth_generate(const SynthConfig& config,
                    const std::filesystem::path& root);

// Indexes all sequences with at least `min_length` frames, in lexicographic
// path order. A camera directory may either contain frames directly (one
// unnamed sequence) or one subdirectory per sequence.
DatasetIndex load_dataset(const std::filesystem::path& root,
                          std::size_t min_length);

// Reads the ground-truth placements of a sequence directory; empty when the
// file is absent.
std::vector<Placement> load_placements(const std::filesystem::path& seq_dir);

// "TSR1" tensor container: magic, dtype code (1 = f32, 2 = f64), ndim, dims
// as u64 little-endian, then little-endian scalars row-major.
template <typename T>
void tensor_file_write(const std::filesystem::path& path,
                       const Tensor<T>& tensor);
template <typename T>
Tensor<T> tensor_file_read(const std::filesystem::path& path);

// Same container, in-memory (used by checkpoints).
template <typename T>
void tensor_to_bytes(const Tensor<T>& tensor, std::string& out);
template <typename T>
Tensor<T> tensor_from_bytes(const std::string& buf, std::size_t& offset);

// Binary PPM (P6), 8-bit, values quantized round-half-up from [0,1].
template <typename T>
void image_write(const std::filesystem::path& path, const Tensor<T>& image);
template <typename T>
Tensor<T> image_read(const std::filesystem::path& path);

// Frame paths of one sequence, sorted.
std::vector<std::filesystem::path> frame_paths(
    const std::filesystem::path& seq_dir);

}  // namespace treid::data

#endif  // TREID_DATA_IO_HPP_
