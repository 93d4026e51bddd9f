#include "pyrseg/deformable.hpp"

#include <cmath>
#include <memory>
#include <vector>

#include "gemm.hpp"
#include "pyrseg/error.hpp"

namespace pyrseg {

OffsetActivation parse_offset_activation(const std::string& name) {
  if (name == "hard_tanh") return OffsetActivation::hard_tanh;
  if (name == "tanh") return OffsetActivation::tanh;
  throw ConfigError("unknown offset activation '" + name + "'");
}

std::string to_string(OffsetActivation a) {
  return a == OffsetActivation::hard_tanh ? "hard_tanh" : "tanh";
}

DeformableBlock DeformableBlock::create(int in_channels, int out_channels, int dilation,
                                        Rng& rng, OffsetActivation activation) {
  DeformableBlock block;
  block.main_conv = ConvLayer::create(ConvSpec::same(in_channels, out_channels, 3, dilation), rng);
  block.offset_conv =
      ConvLayer::create(ConvSpec::same(in_channels, 2 * 3 * 3, 3, 1), rng, /*zero_init=*/true);
  block.activation = activation;
  return block;
}

OffsetField compute_offsets(const Tensor& x, const DeformableBlock& block) {
  const int k = block.main_conv.spec.kernel;
  if (block.offset_conv.spec.out_channels != 2 * k * k) {
    throw ShapeError("offset conv must produce 2*k^2 channels");
  }
  Tensor raw = conv2d(x, block.offset_conv);
  Tensor act = block.activation == OffsetActivation::hard_tanh ? hard_tanh(raw) : tanh(raw);
  return OffsetField{act, k};
}

namespace {

// Bilinear sampling point of one (tap, pixel) pair. Corners are ordered
// (y0,x0), (y0,x1), (y1,x0), (y1,x1). Out-of-image corners point at index 0
// with a zero validity flag and a zero interpolation weight.
struct SamplePoint {
  int index[4];
  float weight[4];
  float valid[4];
  float ly, lx;
};

// Sampling points for one batch item, laid out [tap][pixel].
void build_samples(const float* offsets, int height, int width, int kernel, int dilation,
                   std::vector<SamplePoint>& points) {
  const int taps = kernel * kernel;
  const int plane = height * width;
  const int r = (kernel - 1) / 2;
  points.resize(static_cast<std::size_t>(taps) * plane);
  for (int t = 0; t < taps; ++t) {
    const int ky = t / kernel - r, kx = t % kernel - r;
    const float* dy = offsets + static_cast<std::size_t>(2 * t) * plane;
    const float* dx = offsets + static_cast<std::size_t>(2 * t + 1) * plane;
    for (int h = 0; h < height; ++h) {
      for (int w = 0; w < width; ++w) {
        const int p = h * width + w;
        const float y = static_cast<float>(h + ky * dilation) + dy[p];
        const float x = static_cast<float>(w + kx * dilation) + dx[p];
        const float fy = std::floor(y), fx = std::floor(x);
        const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
        SamplePoint& s = points[static_cast<std::size_t>(t) * plane + p];
        s.ly = y - fy;
        s.lx = x - fx;
        const bool vy[2] = {y0 >= 0 && y0 < height, y0 + 1 >= 0 && y0 + 1 < height};
        const bool vx[2] = {x0 >= 0 && x0 < width, x0 + 1 >= 0 && x0 + 1 < width};
        const float wy[2] = {1.f - s.ly, s.ly}, wx[2] = {1.f - s.lx, s.lx};
        for (int q = 0; q < 4; ++q) {
          const int a = q >> 1, b = q & 1;
          const bool ok = vy[a] && vx[b];
          s.index[q] = ok ? (y0 + a) * width + x0 + b : 0;
          s.valid[q] = ok ? 1.f : 0.f;
          s.weight[q] = ok ? wy[a] * wx[b] : 0.f;
        }
      }
    }
  }
}

// col[(c * taps + t)][p] = bilinear sample of channel c at point (t, p).
void deform_im2col(const float* x, int channels, int plane, int taps,
                   const std::vector<SamplePoint>& points, float* col) {
  for (int c = 0; c < channels; ++c) {
    const float* xc = x + static_cast<std::size_t>(c) * plane;
    for (int t = 0; t < taps; ++t) {
      float* row = col + (static_cast<std::size_t>(c) * taps + t) * plane;
      const SamplePoint* sp = points.data() + static_cast<std::size_t>(t) * plane;
      for (int p = 0; p < plane; ++p) {
        const SamplePoint& s = sp[p];
        row[p] = s.weight[0] * xc[s.index[0]] + s.weight[1] * xc[s.index[1]] +
                 s.weight[2] * xc[s.index[2]] + s.weight[3] * xc[s.index[3]];
      }
    }
  }
}

thread_local std::vector<SamplePoint> t_points;
thread_local std::vector<float> t_col;
thread_local std::vector<float> t_dcol;

void check_deform_args(const Tensor& x, const Tensor& offsets, const Tensor& weight,
                       const Tensor& bias, const ConvSpec& spec) {
  spec.validate();
  const Shape xs = x.shape();
  const int k = spec.kernel;
  if (spec.stride != 1 || spec.groups != 1 || spec.padding != spec.dilation * (k - 1) / 2) {
    throw ContractError("deform_conv2d: needs stride 1, groups 1 and same padding");
  }
  if (xs.c != spec.in_channels) throw ShapeError("deform_conv2d: input channel mismatch");
  const Shape os = offsets.shape();
  if (os.c != 2 * k * k) {
    throw ShapeError("deform_conv2d: offsets need " + std::to_string(2 * k * k) +
                     " channels, got " + std::to_string(os.c));
  }
  if (os.n != xs.n || os.h != xs.h || os.w != xs.w) {
    throw ShapeError("deform_conv2d: offsets " + os.str() + " do not match input " + xs.str());
  }
  if (weight.shape() != Shape{spec.out_channels, spec.in_channels, k, k}) {
    throw ShapeError("deform_conv2d: weight shape " + weight.shape().str());
  }
  if (bias.shape() != Shape{1, spec.out_channels, 1, 1}) {
    throw ShapeError("deform_conv2d: bias shape " + bias.shape().str());
  }
}

}  // namespace

Tensor deform_conv2d(const Tensor& x, const Tensor& offsets, const Tensor& weight,
                     const Tensor& bias, const ConvSpec& spec) {
  check_deform_args(x, offsets, weight, bias, spec);
  const Shape xs = x.shape();
  const int k = spec.kernel, taps = k * k;
  const int plane = xs.h * xs.w;
  const int cin = spec.in_channels, cout = spec.out_channels;
  const int kdim = cin * taps;
  const Shape ys{xs.n, cout, xs.h, xs.w};
  std::vector<float> out(ys.numel());
  auto xd = x.data();
  auto od = offsets.data();
  auto wd = weight.data();
  auto bd = bias.data();
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x, &offsets, &weight, &bias});
  // The weight gradient reuses the sampled columns of every batch item.
  const bool keep_cols = grad && weight.requires_grad();
  const std::size_t col_size = static_cast<std::size_t>(kdim) * plane;
  auto cols = std::make_shared<std::vector<float>>();
  if (keep_cols) cols->resize(col_size * xs.n);
  t_col.resize(col_size);
  for (int n = 0; n < xs.n; ++n) {
    build_samples(od.data() + static_cast<std::size_t>(n) * 2 * taps * plane, xs.h, xs.w, k,
                  spec.dilation, t_points);
    float* col = keep_cols ? cols->data() + n * col_size : t_col.data();
    deform_im2col(xd.data() + static_cast<std::size_t>(n) * cin * plane, cin, plane, taps,
                  t_points, col);
    float* yn = out.data() + static_cast<std::size_t>(n) * cout * plane;
    for (int o = 0; o < cout; ++o) {
      std::fill(yn + static_cast<std::size_t>(o) * plane,
                yn + static_cast<std::size_t>(o + 1) * plane, bd[o]);
    }
    detail::gemm_nn(cout, plane, kdim, wd.data(), col, yn);
  }

  Tensor y(ys, std::move(out), grad);
  if (!grad) return y;

  tape.record({x, offsets, weight, bias}, y,
              [x, offsets, weight, bias, y, spec, k, taps, plane, cin, cout, kdim, cols,
               col_size]() mutable {
    const Shape xs = x.shape();
    auto gy = y.grad();
    if (bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (int n = 0; n < xs.n; ++n) {
        for (int o = 0; o < cout; ++o) {
          const float* row = gy.data() + (static_cast<std::size_t>(n) * cout + o) * plane;
          double acc = 0.0;
          for (int p = 0; p < plane; ++p) acc += row[p];
          gb[o] += static_cast<float>(acc);
        }
      }
    }
    const bool need_w = weight.requires_grad();
    const bool need_x = x.requires_grad();
    const bool need_off = offsets.requires_grad();
    if (!need_w && !need_x && !need_off) return;
    auto xd = x.data();
    auto od = offsets.data();
    auto wd = weight.data();
    std::span<float> gw = need_w ? weight.mutable_grad() : std::span<float>{};
    std::span<float> gx = need_x ? x.mutable_grad() : std::span<float>{};
    std::span<float> goff = need_off ? offsets.mutable_grad() : std::span<float>{};
    t_dcol.resize(col_size);
    for (int n = 0; n < xs.n; ++n) {
      const float* xn = xd.data() + static_cast<std::size_t>(n) * cin * plane;
      const float* gyn = gy.data() + static_cast<std::size_t>(n) * cout * plane;
      build_samples(od.data() + static_cast<std::size_t>(n) * 2 * taps * plane, xs.h, xs.w, k,
                    spec.dilation, t_points);
      if (need_w) detail::gemm_nt(cout, kdim, plane, gyn, cols->data() + n * col_size, gw.data());
      if (!need_x && !need_off) continue;
      std::fill(t_dcol.begin(), t_dcol.end(), 0.f);
      detail::gemm_tn(kdim, plane, cout, wd.data(), gyn, t_dcol.data());
      float* gxn = need_x ? gx.data() + static_cast<std::size_t>(n) * cin * plane : nullptr;
      float* goffn =
          need_off ? goff.data() + static_cast<std::size_t>(n) * 2 * taps * plane : nullptr;
      for (int t = 0; t < taps; ++t) {
        const SamplePoint* sp = t_points.data() + static_cast<std::size_t>(t) * plane;
        float* gdy = need_off ? goffn + static_cast<std::size_t>(2 * t) * plane : nullptr;
        float* gdx = need_off ? goffn + static_cast<std::size_t>(2 * t + 1) * plane : nullptr;
        for (int c = 0; c < cin; ++c) {
          const float* dcol = t_dcol.data() + (static_cast<std::size_t>(c) * taps + t) * plane;
          const float* xc = xn + static_cast<std::size_t>(c) * plane;
          float* gxc = need_x ? gxn + static_cast<std::size_t>(c) * plane : nullptr;
          if (need_x && need_off) {
            for (int p = 0; p < plane; ++p) {
              const float g = dcol[p];
              const SamplePoint& s = sp[p];
              float v[4];
              for (int q = 0; q < 4; ++q) {
                v[q] = s.valid[q] * xc[s.index[q]];
                gxc[s.index[q]] += s.weight[q] * g;
              }
              gdy[p] += g * ((1.f - s.lx) * (v[2] - v[0]) + s.lx * (v[3] - v[1]));
              gdx[p] += g * ((1.f - s.ly) * (v[1] - v[0]) + s.ly * (v[3] - v[2]));
            }
          } else if (need_x) {
            for (int p = 0; p < plane; ++p) {
              const float g = dcol[p];
              const SamplePoint& s = sp[p];
              for (int q = 0; q < 4; ++q) gxc[s.index[q]] += s.weight[q] * g;
            }
          } else {
            for (int p = 0; p < plane; ++p) {
              const float g = dcol[p];
              const SamplePoint& s = sp[p];
              float v[4];
              for (int q = 0; q < 4; ++q) v[q] = s.valid[q] * xc[s.index[q]];
              gdy[p] += g * ((1.f - s.lx) * (v[2] - v[0]) + s.lx * (v[3] - v[1]));
              gdx[p] += g * ((1.f - s.ly) * (v[1] - v[0]) + s.ly * (v[3] - v[2]));
            }
          }
        }
      }
    }
  });
  return y;
}

Tensor deform_conv2d(const Tensor& x, const OffsetField& offsets, const DeformableBlock& block) {
  if (offsets.kernel != block.main_conv.spec.kernel) {
    throw ShapeError("offset field kernel does not match the main conv");
  }
  return deform_conv2d(x, offsets.values, block.main_conv.weight, block.main_conv.bias,
                       block.main_conv.spec);
}

Tensor deformable_forward(const Tensor& x, const DeformableBlock& block) {
  return deform_conv2d(x, compute_offsets(x, block), block);
}

int receptive_footprint(const DeformableBlock& block) {
  const ConvSpec& s = block.main_conv.spec;
  return s.dilation * (s.kernel - 1) / 2 + 1;
}

}  // namespace pyrseg
