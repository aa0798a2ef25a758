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
#include "treid/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "treid/rng.hpp"

namespace treid::data {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (num_identities < 1 || cameras < 1 || seqs_per_id_per_cam < 1 ||
      frames_per_seq < 1 || image_size < 8) {
    throw ConfigError("synth: all counts must be at least 1 (image >= 8)");
  }
  if (jitter_translation < 0 || jitter_scale < 0 || clutter_density < 0 ||
      camera_shift < 0) {
    throw ConfigError("synth: drift/clutter/shift values must be nonnegative");
  }
  if (patch_extent <= 0 || patch_extent > 0.9) {
    throw ConfigError("synth: patch_extent must lie in (0, 0.9]");
  }
}

namespace {

struct Rgb {
  double r = 0, g = 0, b = 0;
};

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  Rgb o;
  switch (static_cast<int>(hp) % 6) {
    case 0: o = {c, x, 0}; break;
    case 1: o = {x, c, 0}; break;
    case 2: o = {0, c, x}; break;
    case 3: o = {0, x, c}; break;
    case 4: o = {x, 0, c}; break;
    default: o = {c, 0, x}; break;
  }
  const double m = v - c;
  return {o.r + m, o.g + m, o.b + m};
}

// Deterministic per-identity texture: two saturated colors mixed by a
// low-frequency sinusoidal pattern, plus a solid border ring.
struct IdentityTexture {
  Rgb base, second;
  double fu = 2, fv = 3, pu = 0, pv = 0;

  static IdentityTexture make(std::uint64_t seed, std::size_t id) {
    Rng rng = substream(seed, "synth/identity", id);
    IdentityTexture t;
    const double h0 = rng.uniform();
    t.base = hsv(h0, 0.85, 1.0);
    t.second = hsv(h0 + 0.3 + 0.4 * rng.uniform(), 0.85, 0.9);
    t.fu = 1.0 + std::floor(rng.uniform() * 4.0);
    t.fv = 1.0 + std::floor(rng.uniform() * 4.0);
    t.pu = rng.uniform();
    t.pv = rng.uniform();
    return t;
  }

  Rgb at(double u, double v) const {
    const double border = 0.08;
    if (u < border || u > 1 - border || v < border || v > 1 - border) {
      return base;
    }
    const double m =
        0.5 + 0.5 * std::sin(6.28318530718 * (fu * u + pu)) *
                  std::sin(6.28318530718 * (fv * v + pv));
    return {base.r * m + second.r * (1 - m), base.g * m + second.g * (1 - m),
            base.b * m + second.b * (1 - m)};
  }
};

// Camera appearance shift: a fixed per-camera hue rotation plus channel
// gain/offset, scaled by the configured strength.
Rgb camera_transform(const Rgb& in, int camera, double strength) {
  if (camera <= 0 || strength <= 0) return in;
  const double k = strength * camera;
  const double rot = std::min(0.5 * k, 0.9);
  Rgb rotated{in.g, in.b, in.r};
  Rgb o{in.r * (1 - rot) + rotated.r * rot,
        in.g * (1 - rot) + rotated.g * rot,
        in.b * (1 - rot) + rotated.b * rot};
  o.r = std::clamp(o.r * (1.0 - 0.2 * k) + 0.06 * k, 0.0, 1.0);
  o.g = std::clamp(o.g, 0.0, 1.0);
  o.b = std::clamp(o.b * (1.0 + 0.15 * k), 0.0, 1.0);
  return o;
}

struct Blob {
  double cx, cy, radius;
  Rgb color;
};

}  // namespace

void synth_generate(const SynthConfig& config, const fs::path& root) {
  config.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create dataset root " + root.string());

  std::vector<IdentityTexture> textures(config.num_identities);
  for (std::size_t id = 0; id < config.num_identities; ++id) {
    textures[id] = IdentityTexture::make(config.seed, id);
  }

  const std::size_t s = config.image_size;
  const double area_units =
      static_cast<double>(s) * static_cast<double>(s) / (32.0 * 32.0);
  std::vector<float> pixels(s * s * 3);

  std::size_t seq_counter = 0;
  for (std::size_t id = 0; id < config.num_identities; ++id) {
    char id_name[32];
    std::snprintf(id_name, sizeof id_name, "id_%04zu", id);
    for (std::size_t cam = 0; cam < config.cameras; ++cam) {
      char cam_name[32];
      std::snprintf(cam_name, sizeof cam_name, "cam_%zu", cam);
      for (std::size_t sq = 0; sq < config.seqs_per_id_per_cam; ++sq) {
        char seq_name[32];
        std::snprintf(seq_name, sizeof seq_name, "seq_%03zu", sq);
        const fs::path seq_dir = root / id_name / cam_name / seq_name;
        fs::create_directories(seq_dir, ec);
        if (ec) throw IoError("cannot create " + seq_dir.string());

        Rng walk = substream(config.seed, "synth/walk", seq_counter);
        const double t0 = std::min(3.0 * config.jitter_translation, 0.35);
        const double s0 = std::min(3.0 * config.jitter_scale, 0.3);
        double cx = walk.uniform(-t0, t0);
        double cy = walk.uniform(-t0, t0);
        double sc = 1.0 + walk.uniform(-s0, s0);

        std::ostringstream placements;
        placements << "sequence,frame,cx,cy,scale\n";
        for (std::size_t t = 0; t < config.frames_per_seq; ++t) {
          if (t > 0) {
            cx = std::clamp(cx + walk.uniform(-config.jitter_translation,
                                              config.jitter_translation),
                            -0.4, 0.4);
            cy = std::clamp(cy + walk.uniform(-config.jitter_translation,
                                              config.jitter_translation),
                            -0.4, 0.4);
            sc = std::clamp(
                sc + walk.uniform(-config.jitter_scale, config.jitter_scale),
                0.6, 1.4);
          }

          Rng frame_rng = substream(config.seed, "synth/frame",
                                    seq_counter * 100003 + t);
          // Background: dim gray noise plus colored distractor blobs.
          const std::size_t n_blobs = static_cast<std::size_t>(
              std::floor(config.clutter_density * area_units +
                         frame_rng.uniform()));
          std::vector<Blob> blobs(n_blobs);
          for (auto& blob : blobs) {
            blob.cx = frame_rng.uniform(0, 1) * (s - 1);
            blob.cy = frame_rng.uniform(0, 1) * (s - 1);
            blob.radius = frame_rng.uniform(0.06, 0.16) * s;
            blob.color = hsv(frame_rng.uniform(), 0.8, 0.95);
          }

          const double px = (cx + 1.0) / 2.0 * (s - 1);
          const double py = (cy + 1.0) / 2.0 * (s - 1);
          const double ext = config.patch_extent * s / 2.0 * sc;

          for (std::size_t yy = 0; yy < s; ++yy) {
            for (std::size_t xx = 0; xx < s; ++xx) {
              const double g = 0.42 + 0.12 * frame_rng.uniform();
              Rgb c{g, g, g};
              for (const auto& blob : blobs) {
                const double dx = xx - blob.cx, dy = yy - blob.cy;
                if (dx * dx + dy * dy < blob.radius * blob.radius) {
                  c = blob.color;
                }
              }
              const double du = (xx - (px - ext)) / (2.0 * ext);
              const double dv = (yy - (py - ext)) / (2.0 * ext);
              if (du >= 0 && du <= 1 && dv >= 0 && dv <= 1) {
                c = textures[id].at(du, dv);
              }
              c = camera_transform(c, static_cast<int>(cam),
                                   config.camera_shift);
              const std::size_t o = (yy * s + xx) * 3;
              pixels[o] = static_cast<float>(c.r);
              pixels[o + 1] = static_cast<float>(c.g);
              pixels[o + 2] = static_cast<float>(c.b);
            }
          }

          char frame_name[32];
          std::snprintf(frame_name, sizeof frame_name, "frame_%04zu.ppm", t);
          image_write(seq_dir / frame_name,
                      Tensor<float>::from({s, s, 3}, pixels));

          char row[160];
          std::snprintf(row, sizeof row, "%s/%s/%s,%zu,%.6f,%.6f,%.6f\n",
                        id_name, cam_name, seq_name, t, cx, cy, sc);
          placements << row;
        }
        std::ofstream pf(seq_dir / "placement.csv", std::ios::binary);
        if (!pf) throw IoError("cannot write " + (seq_dir / "placement.csv").string());
        pf << placements.str();
        ++seq_counter;
      }
    }
  }
}

namespace {

int parse_trailing_int(const fs::path& p) {
  const std::string name = p.filename().string();
  std::size_t end = name.size();
  while (end > 0 && !std::isdigit(static_cast<unsigned char>(name[end - 1]))) {
    --end;
  }
  std::size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(name[begin - 1]))) {
    --begin;
  }
  if (begin == end) {
    throw FormatError("cannot parse a numeric id from '" + p.string() + "'");
  }
  return std::stoi(name.substr(begin, end - begin));
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end(),
            [](const fs::path& a, const fs::path& b) {
              return a.string() < b.string();
            });
  return out;
}

std::size_t count_frames(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") ++n;
  }
  return n;
}

}  // namespace

std::vector<fs::path> frame_paths(const fs::path& seq_dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(seq_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
    return a.string() < b.string();
  });
  return out;
}

DatasetIndex load_dataset(const fs::path& root, std::size_t min_length) {
  DatasetIndex index;
  if (!fs::exists(root)) return index;
  if (!fs::is_directory(root)) {
    throw FormatError("dataset root is not a directory: " + root.string());
  }
  for (const auto& id_dir : sorted_entries(root)) {
    if (!fs::is_directory(id_dir)) {
      throw FormatError("unexpected file in dataset root: " + id_dir.string());
    }
    const int identity = parse_trailing_int(id_dir);
    for (const auto& cam_dir : sorted_entries(id_dir)) {
      if (!fs::is_directory(cam_dir)) {
        throw FormatError("unexpected file under identity: " +
                          cam_dir.string());
      }
      const int camera = parse_trailing_int(cam_dir);
      // A camera directory either holds frames directly (one sequence) or
      // one subdirectory per sequence.
      std::vector<fs::path> seq_dirs;
      bool has_frames = false;
      for (const auto& e : sorted_entries(cam_dir)) {
        if (fs::is_directory(e)) {
          seq_dirs.push_back(e);
        } else if (e.extension() == ".ppm") {
          has_frames = true;
        }
      }
      if (!seq_dirs.empty() && has_frames) {
        throw FormatError("frames mixed with sequence directories in " +
                          cam_dir.string());
      }
      if (seq_dirs.empty()) seq_dirs.push_back(cam_dir);
      for (const auto& seq_dir : seq_dirs) {
        const std::size_t n = count_frames(seq_dir);
        if (n >= min_length && n > 0) {
          index.seqs.push_back(
              SeqRecord{identity, camera, seq_dir.string(), n});
        }
      }
    }
  }
  return index;
}

std::vector<Placement> load_placements(const fs::path& seq_dir) {
  std::vector<Placement> out;
  std::ifstream f(seq_dir / "placement.csv");
  if (!f) return out;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw FormatError("malformed placement row in " +
                        (seq_dir / "placement.csv").string() + ": " + line);
    }
    out.push_back(Placement{std::stod(fields[2]), std::stod(fields[3]),
                            std::stod(fields[4])});
  }
  return out;
}

namespace {

template <typename T>
constexpr std::uint8_t dtype_code() {
  return sizeof(T) == 4 ? 1 : 2;
}

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64(const std::string& buf, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + i]))
         << (8 * i);
  }
  return v;
}

}  // namespace

template <typename T>
void tensor_to_bytes(const Tensor<T>& tensor, std::string& out) {
  out.append("TSR1", 4);
  out.push_back(static_cast<char>(dtype_code<T>()));
  out.push_back(static_cast<char>(tensor.rank()));
  for (std::size_t d : tensor.shape()) append_u64(out, d);
  const char* raw = reinterpret_cast<const char*>(tensor.value().data());
  out.append(raw, tensor.size() * sizeof(T));
}

template <typename T>
Tensor<T> tensor_from_bytes(const std::string& buf, std::size_t& offset) {
  auto need = [&](std::size_t n, const char* what) {
    if (offset + n > buf.size()) {
      throw FormatError(std::string("truncated tensor payload: need ") +
                        what + " at byte offset " + std::to_string(offset));
    }
  };
  need(4, "magic");
  if (std::memcmp(buf.data() + offset, "TSR1", 4) != 0) {
    throw FormatError("bad tensor magic at byte offset " +
                      std::to_string(offset));
  }
  offset += 4;
  need(1, "dtype");
  const std::uint8_t dtype = static_cast<std::uint8_t>(buf[offset++]);
  if (dtype != dtype_code<T>()) {
    throw FormatError("tensor dtype code " + std::to_string(dtype) +
                      " does not match the requested precision at byte offset " +
                      std::to_string(offset - 1));
  }
  need(1, "ndim");
  const std::uint8_t ndim = static_cast<std::uint8_t>(buf[offset++]);
  Shape shape(ndim);
  for (std::uint8_t i = 0; i < ndim; ++i) {
    need(8, "dim");
    shape[i] = static_cast<std::size_t>(read_u64(buf, offset));
    offset += 8;
  }
  const std::size_t count = shape_size(shape);
  need(count * sizeof(T), "payload");
  std::vector<T> values(count);
  std::memcpy(values.data(), buf.data() + offset, count * sizeof(T));
  offset += count * sizeof(T);
  return Tensor<T>::from(std::move(shape), std::move(values));
}

template <typename T>
void tensor_file_write(const fs::path& path, const Tensor<T>& tensor) {
  std::string buf;
  tensor_to_bytes(tensor, buf);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

template <typename T>
Tensor<T> tensor_file_read(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  std::size_t offset = 0;
  Tensor<T> t = tensor_from_bytes<T>(buf, offset);
  if (offset != buf.size()) {
    throw FormatError("trailing bytes after tensor payload at byte offset " +
                      std::to_string(offset) + " in " + path.string());
  }
  return t;
}

template <typename T>
void image_write(const fs::path& path, const Tensor<T>& image) {
  if (image.rank() != 3 || image.shape()[2] != 3) {
    throw ContractError("image_write: expected [H,W,3], got " +
                        shape_str(image.shape()));
  }
  for (T v : image.value()) {
    if (!(v >= T(0) && v <= T(1))) {
      throw ContractError("image_write: values must lie in [0, 1]");
    }
  }
  const std::size_t h = image.shape()[0], w = image.shape()[1];
  std::string buf;
  buf += "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (T v : image.value()) {
    // Round-half-up quantization.
    const int byte = static_cast<int>(std::floor(static_cast<double>(v) * 255.0 + 0.5));
    buf.push_back(static_cast<char>(std::clamp(byte, 0, 255)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

namespace {

// Reads one whitespace-delimited PPM header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {}
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

template <typename T>
Tensor<T> image_read(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  if (ppm_token(f) != "P6") {
    throw FormatError("not a P6 ppm: " + path.string());
  }
  const std::size_t w = std::stoul(ppm_token(f));
  const std::size_t h = std::stoul(ppm_token(f));
  const std::size_t maxval = std::stoul(ppm_token(f));
  if (maxval != 255) {
    throw FormatError("unsupported ppm maxval " + std::to_string(maxval) +
                      " in " + path.string());
  }
  std::vector<char> raw(h * w * 3);
  f.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(f.gcount()) != raw.size()) {
    throw FormatError("truncated ppm payload in " + path.string());
  }
  std::vector<T> values(h * w * 3);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<T>(static_cast<unsigned char>(raw[i])) / T(255);
  }
  return Tensor<T>::from({h, w, 3}, std::move(values));
}

#define TREID_DATA_INSTANTIATE(T)                                          \
  template void tensor_file_write<T>(const fs::path&, const Tensor<T>&);   \
  template Tensor<T> tensor_file_read<T>(const fs::path&);                 \
  template void tensor_to_bytes<T>(const Tensor<T>&, std::string&);        \
  template Tensor<T> tensor_from_bytes<T>(const std::string&,              \
                                          std::size_t&);                   \
  template void image_write<T>(const fs::path&, const Tensor<T>&);         \
  template Tensor<T> image_read<T>(const fs::path&);

TREID_DATA_INSTANTIATE(float)
TREID_DATA_INSTANTIATE(double)
#undef TREID_DATA_INSTANTIATE

}  // namespace treid::data
