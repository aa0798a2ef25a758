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
#include "treid/st2n.hpp"

#include <cmath>

namespace treid {

AffineMatrix build_affine(const TransformParams& theta) {
  // Second-row translation is ty; the scale/translation matrix carries no
  // shear terms.
  return AffineMatrix{theta.sx, 0.0, theta.tx, 0.0, theta.sy, theta.ty};
}

namespace {

// Corner-aligned normalized target coordinate of index i on an axis of
// length n: -1 + 2i/(n-1), with the degenerate n == 1 mapping to 0.
double norm_coord(std::size_t i, std::size_t n) {
  if (n == 1) return 0.0;
  return -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> base_grids(std::size_t out_h,
                                           std::size_t out_w) {
  Tensor<T> bx = Tensor<T>::zeros({out_h, out_w});
  Tensor<T> by = Tensor<T>::zeros({out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      bx.value()[i * out_w + j] = static_cast<T>(norm_coord(j, out_w));
      by.value()[i * out_w + j] = static_cast<T>(norm_coord(i, out_h));
    }
  }
  return {bx, by};
}

}  // namespace

template <typename T>
SamplingGrid<T> generate_grid(const AffineMatrix& affine, std::size_t out_h,
                              std::size_t out_w) {
  if (out_h < 1 || out_w < 1) {
    throw DimError("generate_grid: output size must be at least 1x1");
  }
  SamplingGrid<T> grid;
  grid.xs = Tensor<T>::zeros({out_h, out_w});
  grid.ys = Tensor<T>::zeros({out_h, out_w});
  for (std::size_t i = 0; i < out_h; ++i) {
    const double y = norm_coord(i, out_h);
    for (std::size_t j = 0; j < out_w; ++j) {
      const double x = norm_coord(j, out_w);
      grid.xs.value()[i * out_w + j] =
          static_cast<T>(affine[0] * x + affine[1] * y + affine[2]);
      grid.ys.value()[i * out_w + j] =
          static_cast<T>(affine[3] * x + affine[4] * y + affine[5]);
    }
  }
  return grid;
}

template <typename T>
SamplingGrid<T> make_theta_grid(Tape<T>* tape, const Tensor<T>& theta,
                                std::size_t out_h, std::size_t out_w) {
  if (theta.rank() != 1 || theta.shape()[0] != 4) {
    throw DimError("make_theta_grid: theta must have shape [4], got " +
                   shape_str(theta.shape()));
  }
  auto [bx, by] = base_grids<T>(out_h, out_w);
  Tensor<T> sx = ops::select0(tape, theta, 0);
  Tensor<T> sy = ops::select0(tape, theta, 1);
  Tensor<T> tx = ops::select0(tape, theta, 2);
  Tensor<T> ty = ops::select0(tape, theta, 3);
  SamplingGrid<T> grid;
  grid.xs = ops::add_scalar(tape, ops::mul_scalar(tape, bx, sx), tx);
  grid.ys = ops::add_scalar(tape, ops::mul_scalar(tape, by, sy), ty);
  return grid;
}

template <typename T>
Tensor<T> bilinear_sample(Tape<T>* tape, const Tensor<T>& y,
                          const SamplingGrid<T>& grid) {
  if (y.rank() != 3) {
    throw DimError("bilinear_sample: expected Y [H,W,C], got " +
                   shape_str(y.shape()));
  }
  const Tensor<T>& xs = grid.xs;
  const Tensor<T>& ys = grid.ys;
  if (xs.rank() != 2 || !shape_eq(xs.shape(), ys.shape())) {
    throw DimError("bilinear_sample: malformed grid " + shape_str(xs.shape()) +
                   " / " + shape_str(ys.shape()));
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(static_cast<double>(xs.value()[i])) ||
        !std::isfinite(static_cast<double>(ys.value()[i]))) {
      throw NumericError("bilinear_sample: nonfinite grid coordinate");
    }
  }
  const std::size_t h = y.shape()[0], w = y.shape()[1], c = y.shape()[2];
  const std::size_t oh = xs.shape()[0], ow = xs.shape()[1];
  bool track = tape && (y.requires_grad() || xs.requires_grad() ||
                        ys.requires_grad());
  Tensor<T> out = Tensor<T>::zeros({oh, ow, c}, track);

  // Denormalization factors: [-1,1] spans the map corner to corner.
  const T fx = static_cast<T>(w - 1) / T(2);
  const T fy = static_cast<T>(h - 1) / T(2);

  auto sample_into = [&, h, w, c](std::size_t pix, T* dst) {
    const T px = (xs.value()[pix] + T(1)) * fx;
    const T py = (ys.value()[pix] + T(1)) * fy;
    const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(px));
    const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(py));
    const T wx = px - static_cast<T>(x0);
    const T wy = py - static_cast<T>(y0);
    const std::ptrdiff_t xi[2] = {x0, x0 + 1};
    const std::ptrdiff_t yi[2] = {y0, y0 + 1};
    const T wxs[2] = {T(1) - wx, wx};
    const T wys[2] = {T(1) - wy, wy};
    for (int a = 0; a < 2; ++a) {
      if (yi[a] < 0 || yi[a] >= static_cast<std::ptrdiff_t>(h)) continue;
      for (int b = 0; b < 2; ++b) {
        if (xi[b] < 0 || xi[b] >= static_cast<std::ptrdiff_t>(w)) continue;
        const T wgt = wys[a] * wxs[b];
        const T* src =
            y.value().data() +
            (static_cast<std::size_t>(yi[a]) * w +
             static_cast<std::size_t>(xi[b])) *
                c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += wgt * src[ch];
      }
    }
  };

  for (std::size_t pix = 0; pix < oh * ow; ++pix) {
    sample_into(pix, out.value().data() + pix * c);
  }

  if (track) {
    tape->record({out.node()}, [y, xs, ys, out, h, w, c, oh, ow, fx, fy]() {
      const auto& g = out.node()->grad;
      for (std::size_t pix = 0; pix < oh * ow; ++pix) {
        const T px = (xs.value()[pix] + T(1)) * fx;
        const T py = (ys.value()[pix] + T(1)) * fy;
        const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(px));
        const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(py));
        const T wx = px - static_cast<T>(x0);
        const T wy = py - static_cast<T>(y0);
        const std::ptrdiff_t xi[2] = {x0, x0 + 1};
        const std::ptrdiff_t yi[2] = {y0, y0 + 1};
        const T wxs[2] = {T(1) - wx, wx};
        const T wys[2] = {T(1) - wy, wy};
        // d(weight)/d(px): column 0 loses, column 1 gains.
        const T dwx[2] = {T(-1), T(1)};
        const T dwy[2] = {T(-1), T(1)};
        T dpx = 0, dpy = 0;
        for (int a = 0; a < 2; ++a) {
          if (yi[a] < 0 || yi[a] >= static_cast<std::ptrdiff_t>(h)) continue;
          for (int b = 0; b < 2; ++b) {
            if (xi[b] < 0 || xi[b] >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t base =
                (static_cast<std::size_t>(yi[a]) * w +
                 static_cast<std::size_t>(xi[b])) *
                c;
            T gdot = 0;
            for (std::size_t ch = 0; ch < c; ++ch) {
              const T go = g[pix * c + ch];
              gdot += go * y.value()[base + ch];
              if (y.requires_grad()) {
                y.node()->grad[base + ch] += go * wys[a] * wxs[b];
              }
            }
            dpx += gdot * wys[a] * dwx[b];
            dpy += gdot * dwy[a] * wxs[b];
          }
        }
        if (xs.requires_grad()) xs.node()->grad[pix] += dpx * fx;
        if (ys.requires_grad()) ys.node()->grad[pix] += dpy * fy;
      }
    });
  }
  return out;
}

template <typename T>
St2nParams<T> make_st2n_params(ParamStore<T>& store,
                               const LocalizationConfig& cfg,
                               std::size_t in_channels, std::uint64_t seed) {
  if (cfg.width == 0 || in_channels == 0) {
    throw ConfigError("st2n: zero localization width or input channels");
  }
  if (cfg.temporal && cfg.hidden == 0) {
    throw ConfigError("st2n: zero BiLSTM hidden size");
  }
  St2nParams<T> p;
  p.cfg = cfg;
  p.in_channels = in_channels;
  {
    Rng rng = substream(seed, "init/st2n.loc.conv0.w");
    p.conv0_w = store.add("st2n.loc.conv0.w",
                          nn::init_gaussian<T>({1, 1, in_channels, cfg.width},
                                               rng));
    p.conv0_b = store.add("st2n.loc.conv0.b", Tensor<T>::zeros({cfg.width}));
  }
  p.norm0_gamma =
      store.add("st2n.loc.norm0.gamma", Tensor<T>::full({cfg.width}, T(1)));
  p.norm0_beta =
      store.add("st2n.loc.norm0.beta", Tensor<T>::zeros({cfg.width}));
  {
    Rng rng = substream(seed, "init/st2n.loc.conv1.w");
    p.conv1_w = store.add("st2n.loc.conv1.w",
                          nn::init_gaussian<T>({1, 1, cfg.width, cfg.width},
                                               rng));
    p.conv1_b = store.add("st2n.loc.conv1.b", Tensor<T>::zeros({cfg.width}));
  }
  p.norm1_gamma =
      store.add("st2n.loc.norm1.gamma", Tensor<T>::full({cfg.width}, T(1)));
  p.norm1_beta =
      store.add("st2n.loc.norm1.beta", Tensor<T>::zeros({cfg.width}));
  std::size_t fc_in = cfg.width;
  if (cfg.temporal) {
    {
      Rng rng = substream(seed, "init/st2n.loc.lstm.fw.wx");
      p.lstm.fw.wx = store.add("st2n.loc.lstm.fw.wx",
                               nn::init_orthogonal<T>(4 * cfg.hidden,
                                                      cfg.width, rng));
    }
    {
      Rng rng = substream(seed, "init/st2n.loc.lstm.fw.wh");
      p.lstm.fw.wh = store.add("st2n.loc.lstm.fw.wh",
                               nn::init_orthogonal<T>(4 * cfg.hidden,
                                                      cfg.hidden, rng));
    }
    p.lstm.fw.b = store.add("st2n.loc.lstm.fw.b",
                            Tensor<T>::zeros({4 * cfg.hidden}));
    {
      Rng rng = substream(seed, "init/st2n.loc.lstm.bw.wx");
      p.lstm.bw.wx = store.add("st2n.loc.lstm.bw.wx",
                               nn::init_orthogonal<T>(4 * cfg.hidden,
                                                      cfg.width, rng));
    }
    {
      Rng rng = substream(seed, "init/st2n.loc.lstm.bw.wh");
      p.lstm.bw.wh = store.add("st2n.loc.lstm.bw.wh",
                               nn::init_orthogonal<T>(4 * cfg.hidden,
                                                      cfg.hidden, rng));
    }
    p.lstm.bw.b = store.add("st2n.loc.lstm.bw.b",
                            Tensor<T>::zeros({4 * cfg.hidden}));
    for (auto* lp : {&p.lstm.fw, &p.lstm.bw}) {
      lp->input_dim = cfg.width;
      lp->hidden = cfg.hidden;
      for (std::size_t i = cfg.hidden; i < 2 * cfg.hidden; ++i) {
        lp->b.value()[i] = T(1);
      }
    }
    fc_in = 2 * cfg.hidden;
  }
  // Zero weights with identity-transform bias: theta starts at (1,1,0,0).
  p.fc_w = store.add("st2n.loc.fc.w", Tensor<T>::zeros({4, fc_in}));
  Tensor<T> fc_b = Tensor<T>::zeros({4});
  fc_b.value()[0] = T(1);
  fc_b.value()[1] = T(1);
  p.fc_b = store.add("st2n.loc.fc.b", fc_b);
  return p;
}

namespace {

// Shallow CNN of the localization network: two 1x1 conv + norm + ReLU
// stages with an optional 2x2 max pool in between, then GAP.
template <typename T>
Tensor<T> loc_cnn(Tape<T>* tape, const St2nParams<T>& p, const Tensor<T>& x) {
  Tensor<T> h = ops::conv2d(tape, x, p.conv0_w, 1, 0);
  h = ops::bias_add_hwc(tape, h, p.conv0_b);
  h = nn::spatial_norm(tape, h, p.norm0_gamma, p.norm0_beta);
  h = ops::relu(tape, h);
  if (p.cfg.pool) h = ops::maxpool2(tape, h);
  h = ops::conv2d(tape, h, p.conv1_w, 1, 0);
  h = ops::bias_add_hwc(tape, h, p.conv1_b);
  h = nn::spatial_norm(tape, h, p.norm1_gamma, p.norm1_beta);
  h = ops::relu(tape, h);
  return nn::global_avg_pool(tape, h);
}

}  // namespace

template <typename T>
Tensor<T> localize(Tape<T>* tape, const St2nParams<T>& params,
                   const Tensor<T>& x_seq, bool training, Rng* dropout_rng) {
  if (x_seq.rank() != 4) {
    throw DimError("localize: expected X_seq [T,H2,W2,C2], got " +
                   shape_str(x_seq.shape()));
  }
  const std::size_t frames = x_seq.shape()[0];
  if (frames == 0) throw ContractError("localize: empty sequence");
  if (x_seq.shape()[3] != params.in_channels) {
    throw DimError("localize: channels " + std::to_string(x_seq.shape()[3]) +
                   " do not match localization input " +
                   std::to_string(params.in_channels));
  }
  std::vector<Tensor<T>> agg(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    agg[t] = loc_cnn(tape, params, ops::select0(tape, x_seq, t));
  }
  std::vector<Tensor<T>> ctx;
  if (params.cfg.temporal) {
    Tensor<T> c_seq = ops::stack0(tape, agg);
    Tensor<T> hidden = nn::bilstm_forward(tape, c_seq, params.lstm);
    if (training && params.cfg.dropout > 0.0) {
      if (!dropout_rng) {
        throw ContractError("localize: training dropout requires an rng");
      }
      hidden = nn::dropout(tape, hidden, params.cfg.dropout, true,
                           *dropout_rng);
    }
    ctx.reserve(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      ctx.push_back(ops::select0(tape, hidden, t));
    }
  } else {
    ctx = agg;  // per-frame transform prediction, no temporal context
  }
  std::vector<Tensor<T>> rows(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    rows[t] = nn::fully_connected(tape, ctx[t], params.fc_w, params.fc_b);
  }
  return ops::stack0(tape, rows);
}

template <typename T>
Tensor<T> align_sequence(Tape<T>* tape, const St2nParams<T>& params,
                         const Tensor<T>& y_seq, const Tensor<T>& x_seq,
                         bool training, Rng* dropout_rng,
                         Tensor<T>* theta_out) {
  if (y_seq.rank() != 4 || x_seq.rank() != 4 ||
      y_seq.shape()[0] != x_seq.shape()[0]) {
    throw DimError("align_sequence: mismatched sequences " +
                   shape_str(y_seq.shape()) + " vs " +
                   shape_str(x_seq.shape()));
  }
  const std::size_t frames = y_seq.shape()[0];
  const std::size_t h = y_seq.shape()[1], w = y_seq.shape()[2];
  Tensor<T> theta = localize(tape, params, x_seq, training, dropout_rng);
  if (theta_out) *theta_out = theta;
  std::vector<Tensor<T>> warped(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    Tensor<T> theta_t = ops::select0(tape, theta, t);
    SamplingGrid<T> grid = make_theta_grid(tape, theta_t, h, w);
    warped[t] = bilinear_sample(tape, ops::select0(tape, y_seq, t), grid);
  }
  return ops::stack0(tape, warped);
}

template <typename T>
TransformParams theta_row(const Tensor<T>& theta, std::size_t t) {
  if (theta.rank() != 2 || theta.shape()[1] != 4 || t >= theta.shape()[0]) {
    throw DimError("theta_row: bad access into " + shape_str(theta.shape()));
  }
  const T* p = theta.value().data() + t * 4;
  return TransformParams{static_cast<double>(p[0]), static_cast<double>(p[1]),
                         static_cast<double>(p[2]), static_cast<double>(p[3])};
}

#define TREID_ST2N_INSTANTIATE(T)                                             \
  template struct SamplingGrid<T>;                                            \
  template SamplingGrid<T> generate_grid<T>(const AffineMatrix&, std::size_t, \
                                            std::size_t);                     \
  template SamplingGrid<T> make_theta_grid<T>(Tape<T>*, const Tensor<T>&,     \
                                              std::size_t, std::size_t);      \
  template Tensor<T> bilinear_sample<T>(Tape<T>*, const Tensor<T>&,           \
                                        const SamplingGrid<T>&);              \
  template St2nParams<T> make_st2n_params<T>(ParamStore<T>&,                  \
                                             const LocalizationConfig&,       \
                                             std::size_t, std::uint64_t);     \
  template Tensor<T> localize<T>(Tape<T>*, const St2nParams<T>&,              \
                                 const Tensor<T>&, bool, Rng*);               \
  template Tensor<T> align_sequence<T>(Tape<T>*, const St2nParams<T>&,        \
                                       const Tensor<T>&, const Tensor<T>&,    \
                                       bool, Rng*, Tensor<T>*);               \
  template TransformParams theta_row<T>(const Tensor<T>&, std::size_t);

TREID_ST2N_INSTANTIATE(float)
TREID_ST2N_INSTANTIATE(double)
TREID_ST2N_INSTANTIATE(long double)
#undef TREID_ST2N_INSTANTIATE

}  // namespace treid
