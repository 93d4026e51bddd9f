#include "pyrseg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gemm.hpp"
#include "pyrseg/error.hpp"

namespace pyrseg {

// ---------------------------------------------------------------------------
// ConvSpec / ConvLayer

ConvSpec ConvSpec::same(int in, int out, int kernel, int dilation, int groups) {
  ConvSpec s;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.stride = 1;
  s.dilation = dilation;
  s.groups = groups;
  s.padding = dilation * (kernel - 1) / 2;
  return s;
}

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || groups <= 0) {
    throw ShapeError("conv: channel counts and groups must be positive");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("conv: channels " + std::to_string(in_channels) + "->" +
                     std::to_string(out_channels) + " not divisible by groups " +
                     std::to_string(groups));
  }
  if (kernel <= 0 || kernel % 2 == 0) throw ContractError("conv: kernel must be odd");
  if (stride < 1 || dilation < 1 || padding < 0) {
    throw ContractError("conv: stride and dilation must be >= 1, padding >= 0");
  }
}

int ConvSpec::out_extent(int in_extent) const {
  return (in_extent + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
}

ConvLayer ConvLayer::create(const ConvSpec& spec, Rng& rng, bool zero_init) {
  spec.validate();
  ConvLayer layer;
  layer.spec = spec;
  Shape ws{spec.out_channels, spec.in_channels / spec.groups, spec.kernel, spec.kernel};
  std::vector<float> w(ws.numel(), 0.f);
  if (!zero_init) {
    const float std = std::sqrt(2.f / static_cast<float>(spec.fan_in()));
    for (auto& v : w) v = std * rng.normal();
  }
  layer.weight = Tensor(ws, std::move(w), true);
  layer.bias = Tensor::zeros({1, spec.out_channels, 1, 1}, true);
  return layer;
}

// ---------------------------------------------------------------------------
// conv2d via im2col + GEMM

namespace {

struct ConvGeometry {
  int channels, height, width;  // per group input
  int out_h, out_w;
  int kernel, stride, dilation, padding;
};

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.padding == 0;
}

// col[(c*k + ky)*k + kx][oh*out_w + ow]
void im2col(const float* x, const ConvGeometry& g, float* col) {
  const int k = g.kernel;
  const int plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const float* xc = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + ky * g.dilation;
          float* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(dst, dst + g.out_w, 0.f);
            continue;
          }
          const float* src = xc + static_cast<std::size_t>(ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + kx * g.dilation;
            dst[ow] = (iw >= 0 && iw < g.width) ? src[iw] : 0.f;
          }
        }
      }
    }
  }
}

void col2im(const float* col, const ConvGeometry& g, float* x) {
  const int k = g.kernel;
  const int plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    float* xc = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * plane;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const int ih = oh * g.stride - g.padding + ky * g.dilation;
          if (ih < 0 || ih >= g.height) continue;
          const float* src = row + oh * g.out_w;
          float* dst = xc + static_cast<std::size_t>(ih) * g.width;
          for (int ow = 0; ow < g.out_w; ++ow) {
            const int iw = ow * g.stride - g.padding + kx * g.dilation;
            if (iw >= 0 && iw < g.width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

thread_local std::vector<float> t_col;
thread_local std::vector<float> t_dcol;

}  // namespace

Tensor conv2d(const Tensor& x, const ConvLayer& layer) {
  return conv2d(x, layer.weight, layer.bias, layer.spec);
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const ConvSpec& spec) {
  spec.validate();
  const Shape xs = x.shape();
  if (xs.c != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(xs.c) + " channels, expected " +
                     std::to_string(spec.in_channels));
  }
  const Shape ws{spec.out_channels, spec.in_channels / spec.groups, spec.kernel, spec.kernel};
  if (weight.shape() != ws) {
    throw ShapeError("conv2d: weight shape " + weight.shape().str() + ", expected " + ws.str());
  }
  if (bias.shape() != Shape{1, spec.out_channels, 1, 1}) {
    throw ShapeError("conv2d: bias shape " + bias.shape().str());
  }
  const int out_h = spec.out_extent(xs.h);
  const int out_w = spec.out_extent(xs.w);
  if (out_h < 1 || out_w < 1) {
    throw ContractError("conv2d: input " + xs.str() + " smaller than the kernel span");
  }

  const int groups = spec.groups;
  const int cin_g = spec.in_channels / groups;
  const int cout_g = spec.out_channels / groups;
  const ConvGeometry geo{cin_g, xs.h, xs.w, out_h, out_w,
                         spec.kernel, spec.stride, spec.dilation, spec.padding};
  const int kdim = cin_g * spec.kernel * spec.kernel;
  const int plane = out_h * out_w;
  const bool pointwise = is_pointwise(geo);
  const std::size_t in_group = static_cast<std::size_t>(cin_g) * xs.h * xs.w;
  const std::size_t out_group = static_cast<std::size_t>(cout_g) * plane;
  const std::size_t w_group = static_cast<std::size_t>(cout_g) * kdim;

  const Shape ys{xs.n, spec.out_channels, out_h, out_w};
  std::vector<float> out(ys.numel());
  auto xd = x.data();
  auto wd = weight.data();
  auto bd = bias.data();
  if (!pointwise) t_col.resize(static_cast<std::size_t>(kdim) * plane);

  for (int n = 0; n < xs.n; ++n) {
    for (int g = 0; g < groups; ++g) {
      const float* xg = xd.data() + (static_cast<std::size_t>(n) * groups + g) * in_group;
      float* yg = out.data() + (static_cast<std::size_t>(n) * groups + g) * out_group;
      for (int o = 0; o < cout_g; ++o) {
        std::fill(yg + static_cast<std::size_t>(o) * plane,
                  yg + static_cast<std::size_t>(o + 1) * plane, bd[g * cout_g + o]);
      }
      const float* col = xg;
      if (!pointwise) {
        im2col(xg, geo, t_col.data());
        col = t_col.data();
      }
      detail::gemm_nn(cout_g, plane, kdim, wd.data() + g * w_group, col, yg);
    }
  }

  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x, &weight, &bias});
  Tensor y(ys, std::move(out), grad);
  if (grad) {
    tape.record({x, weight, bias}, y,
                [x, weight, bias, y, geo, groups, cout_g, kdim, plane, pointwise,
                 in_group, out_group, w_group]() mutable {
      auto gy = y.grad();
      const Shape xs = x.shape();
      if (bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (int n = 0; n < xs.n; ++n) {
          for (std::size_t o = 0; o < gb.size(); ++o) {
            const float* row = gy.data() + (static_cast<std::size_t>(n) * gb.size() + o) * plane;
            double acc = 0.0;
            for (int p = 0; p < plane; ++p) acc += row[p];
            gb[o] += static_cast<float>(acc);
          }
        }
      }
      const bool need_w = weight.requires_grad();
      const bool need_x = x.requires_grad();
      if (!need_w && !need_x) return;
      auto xd = x.data();
      auto wd = weight.data();
      std::span<float> gw = need_w ? weight.mutable_grad() : std::span<float>{};
      std::span<float> gx = need_x ? x.mutable_grad() : std::span<float>{};
      if (!pointwise) {
        t_col.resize(static_cast<std::size_t>(kdim) * plane);
        if (need_x) t_dcol.resize(static_cast<std::size_t>(kdim) * plane);
      }
      for (int n = 0; n < xs.n; ++n) {
        for (int g = 0; g < groups; ++g) {
          const std::size_t gi = static_cast<std::size_t>(n) * groups + g;
          const float* xg = xd.data() + gi * in_group;
          const float* gyg = gy.data() + gi * out_group;
          if (need_w) {
            const float* col = xg;
            if (!pointwise) {
              im2col(xg, geo, t_col.data());
              col = t_col.data();
            }
            detail::gemm_nt(cout_g, kdim, plane, gyg, col, gw.data() + g * w_group);
          }
          if (need_x) {
            float* gxg = gx.data() + gi * in_group;
            if (pointwise) {
              detail::gemm_tn(kdim, plane, cout_g, wd.data() + g * w_group, gyg, gxg);
            } else {
              std::fill(t_dcol.begin(), t_dcol.end(), 0.f);
              detail::gemm_tn(kdim, plane, cout_g, wd.data() + g * w_group, gyg,
                              t_dcol.data());
              col2im(t_dcol.data(), geo, gxg);
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Pooling and resampling

namespace {

// Sliding-window sum of width 2r+1 along one axis with zero padding.
void box_sum_rows(const float* src, float* dst, int h, int w, int r) {
  for (int i = 0; i < h; ++i) {
    const float* s = src + static_cast<std::size_t>(i) * w;
    float* d = dst + static_cast<std::size_t>(i) * w;
    for (int j = 0; j < w; ++j) {
      const int lo = std::max(0, j - r), hi = std::min(w - 1, j + r);
      float acc = 0.f;
      for (int t = lo; t <= hi; ++t) acc += s[t];
      d[j] = acc;
    }
  }
}

void box_sum_cols(const float* src, float* dst, int h, int w, int r) {
  for (int i = 0; i < h; ++i) {
    const int lo = std::max(0, i - r), hi = std::min(h - 1, i + r);
    float* d = dst + static_cast<std::size_t>(i) * w;
    std::fill(d, d + w, 0.f);
    for (int t = lo; t <= hi; ++t) {
      const float* s = src + static_cast<std::size_t>(t) * w;
      for (int j = 0; j < w; ++j) d[j] += s[j];
    }
  }
}

std::vector<float> valid_counts(int extent, int r) {
  std::vector<float> counts(extent);
  for (int i = 0; i < extent; ++i) {
    counts[i] = static_cast<float>(std::min(extent - 1, i + r) - std::max(0, i - r) + 1);
  }
  return counts;
}

}  // namespace

Tensor avg_pool_stride1(const Tensor& x, int kernel) {
  const Shape s = x.shape();
  if (kernel < 1 || kernel % 2 == 0) {
    throw ContractError("avg_pool_stride1: kernel must be odd, got " + std::to_string(kernel));
  }
  if (kernel > 2 * std::min(s.h, s.w) - 1) {
    throw ContractError("avg_pool_stride1: kernel " + std::to_string(kernel) +
                        " too large for " + s.str());
  }
  const int r = kernel / 2;
  const auto ch = valid_counts(s.h, r);
  const auto cw = valid_counts(s.w, r);
  const std::size_t plane = s.plane();
  std::vector<float> out(s.numel());
  std::vector<float> tmp(plane);
  auto xd = x.data();
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
    box_sum_rows(xd.data() + p * plane, tmp.data(), s.h, s.w, r);
    float* o = out.data() + p * plane;
    box_sum_cols(tmp.data(), o, s.h, s.w, r);
    for (int i = 0; i < s.h; ++i) {
      for (int j = 0; j < s.w; ++j) o[i * s.w + j] /= ch[i] * cw[j];
    }
  }
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x});
  Tensor y(s, std::move(out), grad);
  if (grad) {
    tape.record({x}, y, [x, y, r, ch, cw]() mutable {
      const Shape s = x.shape();
      const std::size_t plane = s.plane();
      auto gy = y.grad();
      auto gx = x.mutable_grad();
      std::vector<float> scaled(plane), tmp(plane), acc(plane);
      for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
        const float* g = gy.data() + p * plane;
        for (int i = 0; i < s.h; ++i) {
          for (int j = 0; j < s.w; ++j) scaled[i * s.w + j] = g[i * s.w + j] / (ch[i] * cw[j]);
        }
        box_sum_rows(scaled.data(), tmp.data(), s.h, s.w, r);
        box_sum_cols(tmp.data(), acc.data(), s.h, s.w, r);
        float* dst = gx.data() + p * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += acc[i];
      }
    });
  }
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  std::vector<float> out(static_cast<std::size_t>(s.n) * s.c);
  auto xd = x.data();
  for (std::size_t p = 0; p < out.size(); ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += xd[p * plane + i];
    out[p] = static_cast<float>(acc / static_cast<double>(plane));
  }
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x});
  Tensor y({s.n, s.c, 1, 1}, std::move(out), grad);
  if (grad) {
    tape.record({x}, y, [x, y, plane]() mutable {
      auto gy = y.grad();
      auto gx = x.mutable_grad();
      const float inv = 1.f / static_cast<float>(plane);
      for (std::size_t p = 0; p < gy.size(); ++p) {
        const float g = gy[p] * inv;
        for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += g;
      }
    });
  }
  return y;
}

UpsampleMode parse_upsample_mode(const std::string& name) {
  if (name == "nearest") return UpsampleMode::nearest;
  if (name == "bilinear") return UpsampleMode::bilinear;
  throw ConfigError("unknown upsample mode '" + name + "'");
}

namespace {

struct AxisTap {
  int i0, i1;
  float w0, w1;
};

std::vector<AxisTap> axis_taps(int in, int out, UpsampleMode mode) {
  std::vector<AxisTap> taps(out);
  for (int d = 0; d < out; ++d) {
    if (mode == UpsampleMode::nearest) {
      const int src = static_cast<int>(static_cast<long long>(d) * in / out);
      taps[d] = {src, src, 1.f, 0.f};
      continue;
    }
    float src = (static_cast<float>(d) + 0.5f) * static_cast<float>(in) /
                    static_cast<float>(out) - 0.5f;
    src = std::max(src, 0.f);
    const int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
    const int i1 = std::min(i0 + 1, in - 1);
    const float l1 = src - static_cast<float>(i0);
    taps[d] = {i0, i1, 1.f - l1, l1};
  }
  return taps;
}

}  // namespace

Tensor upsample_to(const Tensor& x, int height, int width, UpsampleMode mode) {
  if (height < 1 || width < 1) {
    throw ContractError("upsample_to: target extent must be >= 1");
  }
  const Shape s = x.shape();
  const auto ty = axis_taps(s.h, height, mode);
  const auto tx = axis_taps(s.w, width, mode);
  const Shape ys{s.n, s.c, height, width};
  std::vector<float> out(ys.numel());
  auto xd = x.data();
  const std::size_t in_plane = s.plane(), out_plane = ys.plane();
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
    const float* src = xd.data() + p * in_plane;
    float* dst = out.data() + p * out_plane;
    for (int i = 0; i < height; ++i) {
      const AxisTap& a = ty[i];
      const float* r0 = src + static_cast<std::size_t>(a.i0) * s.w;
      const float* r1 = src + static_cast<std::size_t>(a.i1) * s.w;
      for (int j = 0; j < width; ++j) {
        const AxisTap& b = tx[j];
        dst[i * width + j] = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) +
                             a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
      }
    }
  }
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x});
  Tensor y(ys, std::move(out), grad);
  if (grad) {
    tape.record({x}, y, [x, y, ty, tx]() mutable {
      const Shape s = x.shape();
      const Shape ys = y.shape();
      auto gy = y.grad();
      auto gx = x.mutable_grad();
      const std::size_t in_plane = s.plane(), out_plane = ys.plane();
      for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
        const float* g = gy.data() + p * out_plane;
        float* dst = gx.data() + p * in_plane;
        for (int i = 0; i < ys.h; ++i) {
          const AxisTap& a = ty[i];
          float* r0 = dst + static_cast<std::size_t>(a.i0) * s.w;
          float* r1 = dst + static_cast<std::size_t>(a.i1) * s.w;
          for (int j = 0; j < ys.w; ++j) {
            const AxisTap& b = tx[j];
            const float v = g[i * ys.w + j];
            r0[b.i0] += a.w0 * b.w0 * v;
            r0[b.i1] += a.w0 * b.w1 * v;
            r1[b.i0] += a.w1 * b.w0 * v;
            r1[b.i1] += a.w1 * b.w1 * v;
          }
        }
      }
    });
  }
  return y;
}

Tensor max_pool2(const Tensor& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw ContractError("max_pool2: extents must be even, got " + s.str());
  }
  const Shape ys{s.n, s.c, s.h / 2, s.w / 2};
  std::vector<float> out(ys.numel());
  std::vector<std::uint32_t> argmax(ys.numel());
  auto xd = x.data();
  const std::size_t in_plane = s.plane(), out_plane = ys.plane();
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
    const float* src = xd.data() + p * in_plane;
    for (int i = 0; i < ys.h; ++i) {
      for (int j = 0; j < ys.w; ++j) {
        std::uint32_t best = static_cast<std::uint32_t>(2 * i * s.w + 2 * j);
        for (std::uint32_t cand : {best + 1, best + static_cast<std::uint32_t>(s.w),
                                   best + static_cast<std::uint32_t>(s.w) + 1}) {
          if (src[cand] > src[best]) best = cand;
        }
        const std::size_t o = p * out_plane + static_cast<std::size_t>(i) * ys.w + j;
        out[o] = src[best];
        argmax[o] = best;
      }
    }
  }
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x});
  Tensor y(ys, std::move(out), grad);
  if (grad) {
    tape.record({x}, y, [x, y, argmax = std::move(argmax), in_plane, out_plane]() mutable {
      auto gy = y.grad();
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < gy.size(); ++o) {
        gx[(o / out_plane) * in_plane + argmax[o]] += gy[o];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Normalization

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, float eps) {
  const Shape s = x.shape();
  const Shape ps{1, s.c, 1, 1};
  if (gain.shape() != ps || offset.shape() != ps) {
    throw ShapeError("layer_norm: gain/offset must be " + ps.str());
  }
  const std::size_t m = static_cast<std::size_t>(s.c) * s.plane();
  const std::size_t plane = s.plane();
  std::vector<float> xhat(s.numel()), out(s.numel());
  std::vector<float> rstd(s.n);
  auto xd = x.data();
  auto gd = gain.data();
  auto od = offset.data();
  for (int n = 0; n < s.n; ++n) {
    const float* src = xd.data() + n * m;
    double mu = 0.0;
    for (std::size_t i = 0; i < m; ++i) mu += src[i];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(m);
    const double r = 1.0 / std::sqrt(var + eps);
    rstd[n] = static_cast<float>(r);
    for (std::size_t i = 0; i < m; ++i) {
      const float h = static_cast<float>((src[i] - mu) * r);
      xhat[n * m + i] = h;
      const std::size_t c = i / plane;
      out[n * m + i] = gd[c] * h + od[c];
    }
  }
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x, &gain, &offset});
  Tensor y(s, std::move(out), grad);
  if (grad) {
    tape.record({x, gain, offset}, y,
                [x, gain, offset, y, xhat = std::move(xhat), rstd = std::move(rstd), m,
                 plane]() mutable {
      const Shape s = x.shape();
      auto gy = y.grad();
      auto gd = gain.data();
      if (gain.requires_grad() || offset.requires_grad()) {
        std::vector<double> dg(s.c, 0.0), db(s.c, 0.0);
        for (int n = 0; n < s.n; ++n) {
          for (std::size_t i = 0; i < m; ++i) {
            const std::size_t c = i / plane;
            dg[c] += gy[n * m + i] * xhat[n * m + i];
            db[c] += gy[n * m + i];
          }
        }
        if (gain.requires_grad()) {
          auto g = gain.mutable_grad();
          for (int c = 0; c < s.c; ++c) g[c] += static_cast<float>(dg[c]);
        }
        if (offset.requires_grad()) {
          auto g = offset.mutable_grad();
          for (int c = 0; c < s.c; ++c) g[c] += static_cast<float>(db[c]);
        }
      }
      if (!x.requires_grad()) return;
      auto gx = x.mutable_grad();
      for (int n = 0; n < s.n; ++n) {
        double mean_d = 0.0, mean_dh = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double d = gy[n * m + i] * gd[i / plane];
          mean_d += d;
          mean_dh += d * xhat[n * m + i];
        }
        mean_d /= static_cast<double>(m);
        mean_dh /= static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          const double d = gy[n * m + i] * gd[i / plane];
          gx[n * m + i] +=
              static_cast<float>(rstd[n] * (d - mean_d - xhat[n * m + i] * mean_dh));
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Activations

namespace {

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative df) {
  std::vector<float> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xd[i]);
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x});
  Tensor y(x.shape(), std::move(out), grad);
  if (grad) {
    // df receives the input and the output value.
    tape.record({x}, y, [x, y, df]() mutable {
      auto gy = y.grad();
      auto xd = x.data();
      auto yd = y.data();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * df(xd[i], yd[i]);
    });
  }
  return y;
}

}  // namespace

Tensor relu(const Tensor& x) {
  return unary(
      x, [](float v) { return v > 0.f ? v : 0.f; },
      [](float v, float) { return v > 0.f ? 1.f : 0.f; });
}

Tensor hard_tanh(const Tensor& x) {
  return unary(
      x, [](float v) { return std::clamp(v, -1.f, 1.f); },
      [](float v, float) { return (v > -1.f && v < 1.f) ? 1.f : 0.f; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](float v) { return std::tanh(v); },
      [](float, float t) { return 1.f - t * t; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](float v) { return 1.f / (1.f + std::exp(-v)); },
      [](float, float s) { return s * (1.f - s); });
}

}  // namespace pyrseg
