#include "pyrseg/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "pyrseg/error.hpp"
#include "pyrseg/rng.hpp"

namespace pyrseg {

std::string Shape::str() const {
  std::ostringstream os;
  os << '[' << n << ',' << c << ',' << h << ',' << w << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& s) {
  if (!s.valid()) throw ShapeError("tensor extents must be positive, got " + s.str());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<float> data, bool requires_grad) {
  check_shape(shape);
  if (data.size() != shape.numel()) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape.str());
  }
  impl_ = std::make_shared<Impl>();
  impl_->shape = shape;
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(shape, 0.f, requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  return full(shape, 1.f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  check_shape(shape);
  return Tensor(shape, std::vector<float>(shape.numel(), value), requires_grad);
}

Tensor Tensor::randn(Shape shape, std::uint64_t seed, float stddev,
                     bool requires_grad) {
  check_shape(shape);
  Rng rng(seed);
  std::vector<float> v(shape.numel());
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor(shape, std::move(v), requires_grad);
}

Tensor Tensor::uniform(Shape shape, std::uint64_t seed, float lo, float hi,
                       bool requires_grad) {
  check_shape(shape);
  Rng rng(seed);
  std::vector<float> v(shape.numel());
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->shape;
}

std::span<const float> Tensor::data() const {
  shape();
  return impl_->data;
}

std::span<float> Tensor::mutable_data() const {
  shape();
  return impl_->data;
}

float Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = shape();
  if (n < 0 || n >= s.n || c < 0 || c >= s.c || h < 0 || h >= s.h || w < 0 ||
      w >= s.w) {
    throw ShapeError("index out of range for " + s.str());
  }
  return impl_->data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

float Tensor::item() const {
  if (shape() != kScalar) throw ShapeError("item() on non-scalar " + shape().str());
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  shape();
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient buffer");
  return impl_->grad;
}

std::span<float> Tensor::mutable_grad() const {
  if (!requires_grad()) {
    throw ContractError("gradient requested for a tensor that does not require grad");
  }
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.f);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.f);
}

void Tensor::clear_grad() {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

Tensor Tensor::clone() const {
  return Tensor(shape(), impl_->data, false);
}

std::int64_t Tensor::node() const { return impl_ ? impl_->node : -1; }

// ---------------------------------------------------------------------------
// Tape

Tape& Tape::current() {
  thread_local Tape tape;
  return tape;
}

bool Tape::wants_grad(std::initializer_list<const Tensor*> inputs) const {
  if (!recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void Tape::record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn) {
  if (!output.requires_grad()) {
    throw ContractError("recorded output must require grad");
  }
  output.impl_->node = static_cast<std::int64_t>(nodes_.size());
  nodes_.push_back(Node{std::move(inputs), output, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.shape() != kScalar) {
    throw ContractError("backward needs a scalar [1,1,1,1] loss, got " +
                        loss.shape().str());
  }
  const std::int64_t root = loss.node();
  if (root < 0 || root >= static_cast<std::int64_t>(nodes_.size()) ||
      !nodes_[root].output.same_storage(loss)) {
    throw ContractError("loss is not recorded on the current tape");
  }
  for (std::int64_t i = 0; i <= root; ++i) nodes_[i].output.clear_grad();
  Tensor seed = loss;
  seed.mutable_grad()[0] = 1.f;
  for (std::int64_t i = root; i >= 0; --i) {
    if (nodes_[i].output.has_grad()) nodes_[i].fn();
  }
}

void Tape::clear() {
  for (auto& node : nodes_) node.output.impl_->node = -1;
  nodes_.clear();
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&a, &b});
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  Tensor y(a.shape(), std::move(out), grad);
  if (grad) {
    tape.record({a, b}, y, [a, b, y]() mutable {
      auto gy = y.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&a, &b});
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  Tensor y(a.shape(), std::move(out), grad);
  if (grad) {
    tape.record({a, b}, y, [a, b, y]() mutable {
      auto gy = y.grad();
      if (a.requires_grad()) {
        auto g = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto g = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&a, &b});
  std::vector<float> out(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  Tensor y(a.shape(), std::move(out), grad);
  if (grad) {
    tape.record({a, b}, y, [a, b, y]() mutable {
      auto gy = y.grad();
      auto va = a.data(), vb = b.data();
      if (a.requires_grad()) {
        auto g = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * vb[i];
      }
      if (b.requires_grad()) {
        auto g = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * va[i];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& x, float factor) {
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x});
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  Tensor y(x.shape(), std::move(out), grad);
  if (grad) {
    tape.record({x}, y, [x, y, factor]() mutable {
      auto gy = y.grad();
      auto g = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * gy[i];
    });
  }
  return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  return concat_channels(std::vector<Tensor>{a, b});
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = parts.front().shape();
  Shape out_shape = first;
  out_shape.c = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: N/H/W mismatch " + first.str() + " vs " + s.str());
    }
    out_shape.c += s.c;
    any_grad = any_grad || p.requires_grad();
  }
  auto& tape = Tape::current();
  const bool grad = tape.recording() && any_grad;
  std::vector<float> out(out_shape.numel());
  const std::size_t plane = first.plane();
  for (int n = 0; n < first.n; ++n) {
    std::size_t dst = static_cast<std::size_t>(n) * out_shape.c * plane;
    for (const auto& p : parts) {
      const std::size_t len = static_cast<std::size_t>(p.shape().c) * plane;
      auto src = p.data().subspan(static_cast<std::size_t>(n) * len, len);
      std::copy(src.begin(), src.end(), out.begin() + dst);
      dst += len;
    }
  }
  Tensor y(out_shape, std::move(out), grad);
  if (grad) {
    tape.record(parts, y, [parts, y, plane]() mutable {
      auto gy = y.grad();
      const Shape ys = y.shape();
      std::size_t offset = 0;
      for (auto& p : parts) {
        const std::size_t len = static_cast<std::size_t>(p.shape().c) * plane;
        if (p.requires_grad()) {
          auto g = p.mutable_grad();
          for (int n = 0; n < ys.n; ++n) {
            const std::size_t src = static_cast<std::size_t>(n) * ys.c * plane + offset;
            for (std::size_t i = 0; i < len; ++i) g[n * len + i] += gy[src + i];
          }
        }
        offset += len;
      }
    });
  }
  return y;
}

Tensor slice_channels(const Tensor& x, int begin, int count) {
  const Shape s = x.shape();
  if (begin < 0 || count <= 0 || begin + count > s.c) {
    throw ShapeError("slice_channels: range out of bounds for " + s.str());
  }
  Shape out_shape = s;
  out_shape.c = count;
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x});
  const std::size_t plane = s.plane();
  const std::size_t len = static_cast<std::size_t>(count) * plane;
  std::vector<float> out(out_shape.numel());
  auto src = x.data();
  for (int n = 0; n < s.n; ++n) {
    const std::size_t off = (static_cast<std::size_t>(n) * s.c + begin) * plane;
    std::copy(src.begin() + off, src.begin() + off + len, out.begin() + n * len);
  }
  Tensor y(out_shape, std::move(out), grad);
  if (grad) {
    tape.record({x}, y, [x, y, begin, plane, len]() mutable {
      auto gy = y.grad();
      auto g = x.mutable_grad();
      const Shape xs = x.shape();
      for (int n = 0; n < xs.n; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * xs.c + begin) * plane;
        for (std::size_t i = 0; i < len; ++i) g[off + i] += gy[n * len + i];
      }
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  auto& tape = Tape::current();
  const bool grad = tape.wants_grad({&x});
  double total = 0.0;
  for (float v : x.data()) total += v;
  Tensor y(kScalar, {static_cast<float>(total)}, grad);
  if (grad) {
    tape.record({x}, y, [x, y]() mutable {
      const float gy = y.grad()[0];
      for (auto& g : x.mutable_grad()) g += gy;
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.f / static_cast<float>(x.numel()));
}

Tensor weighted_sum(const std::vector<Tensor>& terms,
                    const std::vector<float>& weights) {
  if (terms.size() != weights.size() || terms.empty()) {
    throw ShapeError("weighted_sum: term/weight count mismatch");
  }
  bool any_grad = false;
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].shape() != kScalar) throw ShapeError("weighted_sum: terms must be scalars");
    any_grad = any_grad || terms[i].requires_grad();
    total += static_cast<double>(weights[i]) * terms[i].item();
  }
  auto& tape = Tape::current();
  const bool grad = tape.recording() && any_grad;
  Tensor y(kScalar, {static_cast<float>(total)}, grad);
  if (grad) {
    tape.record(terms, y, [terms, weights, y]() mutable {
      const float gy = y.grad()[0];
      for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].requires_grad()) terms[i].mutable_grad()[0] += weights[i] * gy;
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Dump format

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  }
  return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  const Shape& s = t.shape();
  out << "TNSR " << s.n << ' ' << s.c << ' ' << s.h << ' ' << s.w << '\n';
  std::vector<char> bytes(t.numel() * 4);
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::uint32_t le = to_little_endian(std::bit_cast<std::uint32_t>(d[i]));
    std::memcpy(bytes.data() + 4 * i, &le, 4);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing tensor payload");
}

Tensor read_tensor(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw FormatError("missing TNSR header");
  std::istringstream hs(header);
  std::string magic;
  Shape s{0, 0, 0, 0};
  if (!(hs >> magic >> s.n >> s.c >> s.h >> s.w) || magic != "TNSR") {
    throw FormatError("malformed TNSR header: '" + header + "'");
  }
  std::string rest;
  if (hs >> rest) throw FormatError("trailing data in TNSR header");
  if (!s.valid()) throw FormatError("non-positive extent in TNSR header");
  std::vector<char> bytes(s.numel() * 4);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError("truncated TNSR payload");
  }
  std::vector<float> v(s.numel());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::uint32_t le;
    std::memcpy(&le, bytes.data() + 4 * i, 4);
    v[i] = std::bit_cast<float>(to_little_endian(le));
  }
  return Tensor(s, std::move(v));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return read_tensor(in);
}

}  // namespace pyrseg
