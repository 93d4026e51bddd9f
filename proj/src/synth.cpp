#include "pyrseg/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pyrseg/error.hpp"

namespace pyrseg {

namespace {
constexpr float kPi = std::numbers::pi_v<float>;
}

std::string to_string(Family f) {
  switch (f) {
    case Family::lens: return "lens";
    case Family::pupil: return "pupil";
    case Family::cornea: return "cornea";
    case Family::instrument: return "instrument";
  }
  return "unknown";
}

Family parse_family(const std::string& name) {
  for (Family f : kFamilies) {
    if (to_string(f) == name) return f;
  }
  throw FormatError("unknown object family '" + name + "'");
}

void SceneSpec::validate() const {
  if (size < 8 || size % 8 != 0) {
    throw ContractError("scene size must be a positive multiple of 8, got " +
                        std::to_string(size));
  }
  if (transparency < 0.f || transparency > 1.f) {
    throw ContractError("transparency must lie in [0, 1]");
  }
  if (edge_softness < 0.f || deformation < 0.f || deformation >= 1.f) {
    throw ContractError("edge softness must be >= 0 and deformation in [0, 1)");
  }
  if (!(scale_min > 0.f) || scale_max < scale_min) {
    throw ContractError("scale range must satisfy 0 < min <= max");
  }
}

float family_base_extent(Family family, int size) {
  const float s = static_cast<float>(size);
  switch (family) {
    case Family::lens: return 0.26f * s;
    case Family::pupil: return 0.20f * s;
    case Family::cornea: return 0.40f * s;
    case Family::instrument: return 0.45f * s;
  }
  return 0.2f * s;
}

SceneSpec SceneSpec::family_default(Family family, int size) {
  SceneSpec spec;
  spec.size = size;
  spec.family = family;
  switch (family) {
    case Family::lens:
      spec.deformation = 0.12f;
      spec.transparency = 0.65f;
      spec.edge_softness = 0.8f;
      spec.scale_min = 0.8f;
      spec.scale_max = 1.2f;
      break;
    case Family::pupil:
      spec.deformation = 0.05f;
      spec.edge_softness = 0.5f;
      spec.scale_min = 0.7f;
      spec.scale_max = 1.3f;
      break;
    case Family::cornea:
      spec.deformation = 0.03f;
      spec.transparency = 0.2f;
      spec.edge_softness = 3.f;
      spec.scale_min = 0.85f;
      spec.scale_max = 1.1f;
      break;
    case Family::instrument:
      spec.edge_softness = 0.5f;
      spec.scale_min = 0.5f;
      spec.scale_max = 1.2f;
      break;
  }
  return spec;
}

namespace {

struct Rgb {
  float r, g, b;
};

// Smooth random field in roughly [-1, 1] from a few low-frequency waves.
struct WaveField {
  struct Wave {
    float fy, fx, phase, amp;
  };
  std::vector<Wave> waves;

  WaveField(Rng& rng, int count, float max_freq) {
    float total = 0.f;
    for (int i = 0; i < count; ++i) {
      Wave w{rng.uniform(-max_freq, max_freq), rng.uniform(-max_freq, max_freq),
             rng.uniform(0.f, 2.f * kPi), rng.uniform(0.3f, 1.f)};
      total += w.amp;
      waves.push_back(w);
    }
    for (auto& w : waves) w.amp /= total;
  }

  float operator()(float y, float x, int size) const {
    float v = 0.f;
    for (const auto& w : waves) {
      v += w.amp * std::sin(2.f * kPi * (w.fy * y + w.fx * x) / static_cast<float>(size) + w.phase);
    }
    return v;
  }
};

// Separable Gaussian blur of a single plane, replicated borders.
void gaussian_blur(std::vector<float>& plane, int h, int w, float sigma) {
  if (sigma <= 0.f) return;
  const int r = static_cast<int>(std::ceil(3.f * sigma));
  std::vector<float> k(2 * r + 1);
  float total = 0.f;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5f * static_cast<float>(i * i) / (sigma * sigma));
    total += k[i + r];
  }
  for (auto& v : k) v /= total;
  std::vector<float> tmp(plane.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * plane[y * w + std::clamp(x + t, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp[std::clamp(y + t, 0, h - 1) * w + x];
      plane[y * w + x] = acc;
    }
  }
}

struct Geometry {
  Family family;
  float cy, cx;
  float extent;      // radius / semi-axis / outer radius / bar length
  float minor;       // lens minor semi-axis, ring inner radius, bar width
  float angle;       // rotation
  int lobes;         // boundary perturbation frequency
  float lobe_phase;
  float deformation;

  bool inside(float y, float x) const {
    const float dy = y - cy, dx = x - cx;
    if (family == Family::instrument) {
      const float u = dx * std::cos(angle) + dy * std::sin(angle);
      const float v = -dx * std::sin(angle) + dy * std::cos(angle);
      return std::abs(u) <= 0.5f * extent && std::abs(v) <= 0.5f * minor;
    }
    const float dist = std::sqrt(dy * dy + dx * dx);
    const float theta = std::atan2(dy, dx);
    const float wobble = 1.f + deformation * std::sin(static_cast<float>(lobes) * theta + lobe_phase);
    switch (family) {
      case Family::pupil: return dist <= extent * wobble;
      case Family::cornea: return dist <= extent * wobble && dist >= minor * wobble;
      case Family::lens: {
        const float t = theta - angle;
        const float a = extent, b = minor;
        const float radius =
            a * b / std::sqrt(b * b * std::cos(t) * std::cos(t) + a * a * std::sin(t) * std::sin(t));
        return dist <= radius * wobble;
      }
      default: return false;
    }
  }

  // Chebyshev-ish bound on how far the object reaches from its centre.
  float reach() const {
    if (family == Family::instrument) return 0.5f * std::hypot(extent, minor);
    return extent * (1.f + deformation);
  }
};

}  // namespace

SegSample generate(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int S = spec.size;
  const float fs = static_cast<float>(S);
  Rng geo_rng(derive_seed(seed, 1));
  Rng tex_rng(derive_seed(seed, 2 + spec.texture_seed));

  // Geometry first: the mask depends only on these draws.
  Geometry g{};
  g.family = spec.family;
  g.deformation = spec.deformation;
  const float scale = spec.scale_min + (spec.scale_max - spec.scale_min) * geo_rng.uniform();
  g.extent = family_base_extent(spec.family, S) * scale;
  switch (spec.family) {
    case Family::lens: g.minor = g.extent * geo_rng.uniform(0.6f, 0.85f); break;
    case Family::cornea: g.minor = g.extent * geo_rng.uniform(0.7f, 0.8f); break;
    case Family::instrument: g.minor = std::max(2.f, 0.07f * fs * scale); break;
    case Family::pupil: g.minor = g.extent; break;
  }
  const float angle = geo_rng.uniform(0.f, kPi);
  g.lobes = 3 + static_cast<int>(geo_rng.below(3));
  g.lobe_phase = geo_rng.uniform(0.f, 2.f * kPi);
  const float uy = geo_rng.uniform(), ux = geo_rng.uniform();
  if (spec.centered) {
    g.angle = 0.f;
    g.cy = g.cx = 0.5f * fs;
  } else {
    g.angle = angle;
    const float margin = std::min(g.reach() + 1.f, 0.5f * fs);
    g.cy = margin + (fs - 2.f * margin) * uy;
    g.cx = margin + (fs - 2.f * margin) * ux;
  }

  const std::size_t plane = static_cast<std::size_t>(S) * S;
  std::vector<float> mask(plane);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      mask[y * S + x] = g.inside(static_cast<float>(y) + 0.5f, static_cast<float>(x) + 0.5f) ? 1.f : 0.f;
    }
  }

  // Photometrics.
  const Rgb bg_base{tex_rng.uniform(0.45f, 0.7f), tex_rng.uniform(0.2f, 0.4f),
                    tex_rng.uniform(0.15f, 0.3f)};
  const WaveField bg_field(tex_rng, 4, 3.f);
  const WaveField obj_field(tex_rng, 3, 6.f);
  Rgb obj{};
  float texture_amp = 0.05f;
  switch (spec.family) {
    case Family::lens:
      obj = {tex_rng.uniform(0.75f, 0.9f), tex_rng.uniform(0.8f, 0.9f), tex_rng.uniform(0.85f, 0.95f)};
      break;
    case Family::pupil:
      obj = {tex_rng.uniform(0.05f, 0.45f), tex_rng.uniform(0.05f, 0.3f), tex_rng.uniform(0.05f, 0.35f)};
      texture_amp = 0.2f;
      break;
    case Family::cornea:
      obj = {tex_rng.uniform(0.8f, 0.95f), tex_rng.uniform(0.6f, 0.8f), tex_rng.uniform(0.5f, 0.7f)};
      break;
    case Family::instrument: {
      const float metal = tex_rng.uniform(0.65f, 0.9f);
      obj = {metal, metal, metal * tex_rng.uniform(0.95f, 1.05f)};
      texture_amp = 0.1f;
      break;
    }
  }
  std::vector<float> alpha(mask);
  for (auto& a : alpha) a *= 1.f - spec.transparency;
  gaussian_blur(alpha, S, S, spec.edge_softness);

  std::vector<float> image(3 * plane);
  const float bg_rgb[3] = {bg_base.r, bg_base.g, bg_base.b};
  const float obj_rgb[3] = {obj.r, obj.g, obj.b};
  std::vector<float> noise(plane);
  for (auto& v : noise) v = 0.02f * tex_rng.normal();
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * S + x;
      const float fy = static_cast<float>(y), fx = static_cast<float>(x);
      const float bg_mod = 1.f + 0.25f * bg_field(fy, fx, S);
      const float obj_mod = 1.f + texture_amp * obj_field(fy, fx, S);
      for (int c = 0; c < 3; ++c) {
        const float b = bg_rgb[c] * bg_mod + noise[p];
        const float o = obj_rgb[c] * obj_mod;
        image[c * plane + p] = std::clamp(b * (1.f - alpha[p]) + o * alpha[p], 0.f, 1.f);
      }
    }
  }
  return SegSample{Tensor({1, 3, S, S}, std::move(image)), Tensor({1, 1, S, S}, std::move(mask))};
}

// ---------------------------------------------------------------------------
// Augmentation

AugmentParams AugmentParams::sample(const AugmentOps& ops, int size, Rng& rng) {
  AugmentParams p;
  // Draw every value so the stream does not depend on which ops are enabled.
  const bool blur = rng.uniform() < 0.3f;
  const int length = rng.uniform() < 0.5f ? 5 : 9;
  const int direction = static_cast<int>(rng.below(4));
  const float brightness = rng.uniform(-0.1f, 0.1f);
  const float contrast = rng.uniform(0.8f, 1.2f);
  const float sx = rng.uniform(-0.06f, 0.06f) * static_cast<float>(size);
  const float sy = rng.uniform(-0.06f, 0.06f) * static_cast<float>(size);
  const float scale = rng.uniform(0.9f, 1.1f);
  const float rot = rng.uniform(-15.f, 15.f);
  if (ops.motion_blur && blur) {
    p.blur_length = length;
    p.blur_direction = direction;
  }
  if (ops.brightness_contrast) {
    p.brightness = brightness;
    p.contrast = contrast;
  }
  if (ops.shift_scale_rotate) {
    p.shift_x = sx;
    p.shift_y = sy;
    p.scale = scale;
    p.rotation_deg = rot;
  }
  return p;
}

bool AugmentParams::geometric_identity() const {
  return shift_x == 0.f && shift_y == 0.f && scale == 1.f && rotation_deg == 0.f;
}

namespace {

SegSample warp(const SegSample& s, const AugmentParams& p) {
  const Shape is = s.image.shape();
  const int H = is.h, W = is.w;
  const float cy = 0.5f * static_cast<float>(H), cx = 0.5f * static_cast<float>(W);
  const double theta = static_cast<double>(p.rotation_deg) * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const std::size_t plane = is.plane();
  std::vector<float> image(is.numel(), 0.f), mask(plane, 0.f);
  auto src_img = s.image.data();
  auto src_mask = s.mask.data();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      // Inverse map of output pixel centre to source coordinates.
      const double u = (x + 0.5 - cx - p.shift_x) / p.scale;
      const double v = (y + 0.5 - cy - p.shift_y) / p.scale;
      const double sx = cx + ct * u + st * v;
      const double sy = cy - st * u + ct * v;
      const std::size_t o = static_cast<std::size_t>(y) * W + x;
      const int mx = static_cast<int>(std::floor(sx)), my = static_cast<int>(std::floor(sy));
      if (mx >= 0 && mx < W && my >= 0 && my < H) mask[o] = src_mask[my * W + mx];
      const double fx = sx - 0.5, fy = sy - 0.5;
      const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
      const float lx = static_cast<float>(fx - x0), ly = static_cast<float>(fy - y0);
      for (int c = 0; c < is.c; ++c) {
        const float* ch = src_img.data() + c * plane;
        auto at = [&](int yy, int xx) {
          return (yy >= 0 && yy < H && xx >= 0 && xx < W) ? ch[yy * W + xx] : 0.f;
        };
        image[c * plane + o] = (1.f - ly) * ((1.f - lx) * at(y0, x0) + lx * at(y0, x0 + 1)) +
                               ly * ((1.f - lx) * at(y0 + 1, x0) + lx * at(y0 + 1, x0 + 1));
      }
    }
  }
  return SegSample{Tensor(is, std::move(image)), Tensor(s.mask.shape(), std::move(mask))};
}

}  // namespace

Tensor motion_blur(const Tensor& image, int length, int direction) {
  if (length <= 1) return image.clone();
  if (length % 2 == 0) throw ContractError("motion blur length must be odd");
  static constexpr int kDirs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  const int dy = kDirs[direction & 3][0], dx = kDirs[direction & 3][1];
  const Shape s = image.shape();
  const int r = length / 2;
  const std::size_t plane = s.plane();
  std::vector<float> out(s.numel());
  auto d = image.data();
  const float inv = 1.f / static_cast<float>(length);
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n) * s.c; ++p) {
    const float* src = d.data() + p * plane;
    float* dst = out.data() + p * plane;
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        float acc = 0.f;
        for (int t = -r; t <= r; ++t) {
          const int yy = std::clamp(y + t * dy, 0, s.h - 1);
          const int xx = std::clamp(x + t * dx, 0, s.w - 1);
          acc += src[yy * s.w + xx];
        }
        dst[y * s.w + x] = acc * inv;
      }
    }
  }
  return Tensor(s, std::move(out));
}

SegSample augment(const SegSample& sample, const AugmentParams& params) {
  SegSample out = params.geometric_identity()
                      ? SegSample{sample.image.clone(), sample.mask.clone()}
                      : warp(sample, params);
  if (params.brightness != 0.f || params.contrast != 1.f) {
    for (auto& v : out.image.mutable_data()) {
      v = std::clamp((v - 0.5f) * params.contrast + 0.5f + params.brightness, 0.f, 1.f);
    }
  }
  if (params.blur_length > 1) {
    out.image = motion_blur(out.image, params.blur_length, params.blur_direction);
  }
  return out;
}

SegSample augment(const SegSample& sample, const AugmentOps& ops, std::uint64_t seed) {
  Rng rng(seed);
  return augment(sample, AugmentParams::sample(ops, sample.image.shape().h, rng));
}

// ---------------------------------------------------------------------------
// PPM / PGM

namespace {

std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

void write_netpbm(const std::string& path, const char* magic, int width, int height,
                  const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << magic << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

// Reads one header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in, const std::string& path) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) throw FormatError("truncated header in " + path);
  return tok;
}

std::vector<std::uint8_t> read_netpbm(const std::string& path, const std::string& magic,
                                      int channels, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  if (header_token(in, path) != magic) throw FormatError("expected " + magic + " in " + path);
  try {
    width = std::stoi(header_token(in, path));
    height = std::stoi(header_token(in, path));
    if (std::stoi(header_token(in, path)) != 255) throw FormatError("maxval must be 255 in " + path);
  } catch (const std::logic_error&) {
    throw FormatError("malformed header in " + path);
  }
  if (width <= 0 || height <= 0) throw FormatError("bad dimensions in " + path);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError("truncated pixel data in " + path);
  }
  return bytes;
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  const Shape s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("write_ppm expects [1,3,H,W], got " + s.str());
  const std::size_t plane = s.plane();
  std::vector<std::uint8_t> bytes(3 * plane);
  auto d = image.data();
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) bytes[3 * p + c] = quantize(d[c * plane + p]);
  }
  write_netpbm(path, "P6", s.w, s.h, bytes);
}

void write_pgm(const std::string& path, const Tensor& mask) {
  const Shape s = mask.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("write_pgm expects [1,1,H,W], got " + s.str());
  std::vector<std::uint8_t> bytes(s.plane());
  auto d = mask.data();
  for (std::size_t p = 0; p < bytes.size(); ++p) bytes[p] = d[p] > 0.5f ? 255 : 0;
  write_netpbm(path, "P5", s.w, s.h, bytes);
}

Tensor read_ppm(const std::string& path) {
  int w = 0, h = 0;
  auto bytes = read_netpbm(path, "P6", 3, w, h);
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  std::vector<float> v(3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) v[c * plane + p] = static_cast<float>(bytes[3 * p + c]) / 255.f;
  }
  return Tensor({1, 3, h, w}, std::move(v));
}

Tensor read_pgm(const std::string& path) {
  int w = 0, h = 0;
  auto bytes = read_netpbm(path, "P5", 1, w, h);
  std::vector<float> v(bytes.size());
  for (std::size_t p = 0; p < v.size(); ++p) v[p] = bytes[p] > 127 ? 1.f : 0.f;
  return Tensor({1, 1, h, w}, std::move(v));
}

void save_sample(const SegSample& sample, const std::string& stem) {
  write_ppm(stem + ".ppm", sample.image);
  write_pgm(stem + ".pgm", sample.mask);
}

SegSample load_sample(const std::string& stem) {
  SegSample s{read_ppm(stem + ".ppm"), read_pgm(stem + ".pgm")};
  if (s.image.shape().h != s.mask.shape().h || s.image.shape().w != s.mask.shape().w) {
    throw FormatError("image and mask sizes differ for " + stem);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Corpus

void CorpusSpec::validate() const {
  if (size < 8 || size % 8 != 0) {
    throw ConfigError("data.size must be a positive multiple of 8, got " + std::to_string(size));
  }
  if (train < 1 || val < 1 || test < 1) throw ConfigError("every corpus split needs samples");
}

std::uint64_t split_seed_base(const std::string& split, std::uint64_t corpus_seed) {
  const std::uint64_t base = corpus_seed * 10'000'000ULL;
  if (split == "train") return base;
  if (split == "val") return base + 3'000'000ULL;
  if (split == "test") return base + 6'000'000ULL;
  throw ContractError("unknown split '" + split + "'");
}

std::vector<CorpusEntry> Corpus::split(const std::string& name) const {
  std::vector<CorpusEntry> out;
  for (const auto& e : entries) {
    if (e.split == name) out.push_back(e);
  }
  return out;
}

std::string Corpus::stem(const CorpusEntry& e) const {
  namespace fs = std::filesystem;
  return (fs::path(root) / e.split / to_string(e.family) / std::to_string(e.seed)).string();
}

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  namespace fs = std::filesystem;
  Corpus corpus{spec.root, spec.size, {}};
  for (const auto& [split, count] :
       {std::pair<std::string, int>{"train", spec.train}, {"val", spec.val}, {"test", spec.test}}) {
    const std::uint64_t base = split_seed_base(split, spec.seed);
    for (int i = 0; i < count; ++i) {
      CorpusEntry e{split, kFamilies[i % kFamilies.size()], base + static_cast<std::uint64_t>(i)};
      std::error_code ec;
      fs::create_directories(fs::path(spec.root) / split / to_string(e.family), ec);
      if (ec) throw IoError("cannot create corpus directory: " + ec.message());
      save_sample(generate(SceneSpec::family_default(e.family, spec.size), e.seed), corpus.stem(e));
      corpus.entries.push_back(e);
    }
  }
  std::ofstream manifest(fs::path(spec.root) / "corpus.txt");
  if (!manifest) throw IoError("cannot write corpus manifest in " + spec.root);
  manifest << "# pyrseg corpus v1: <split> <family> <seed>\n";
  manifest << "size " << spec.size << '\n';
  for (const auto& e : corpus.entries) {
    manifest << e.split << ' ' << to_string(e.family) << ' ' << e.seed << '\n';
  }
  if (!manifest) throw IoError("failed writing corpus manifest");
  return corpus;
}

Corpus load_corpus(const std::string& root) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(root) / "corpus.txt");
  if (!in) throw IoError("missing corpus manifest: " + (fs::path(root) / "corpus.txt").string());
  Corpus corpus{root, 0, {}};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string first;
    ls >> first;
    if (first == "size") {
      if (!(ls >> corpus.size)) throw FormatError("bad size line in corpus manifest");
      continue;
    }
    std::string family;
    CorpusEntry e;
    e.split = first;
    if (!(ls >> family >> e.seed)) throw FormatError("bad corpus manifest line: " + line);
    e.family = parse_family(family);
    corpus.entries.push_back(e);
  }
  return corpus;
}

SegSample load_entry(const Corpus& corpus, const CorpusEntry& entry) {
  return load_sample(corpus.stem(entry));
}

}  // namespace pyrseg
