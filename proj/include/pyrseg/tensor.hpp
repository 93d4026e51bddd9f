#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pyrseg {

// Extents of a rank-4 [batch, channel, height, width] tensor.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool valid() const { return n > 0 && c > 0 && h > 0 && w > 0; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

inline constexpr Shape kScalar{1, 1, 1, 1};

// Dense float32 rank-4 tensor with an optional gradient buffer. Copies share
// storage; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor randn(Shape shape, std::uint64_t seed, float stddev = 1.f,
                      bool requires_grad = false);
  static Tensor uniform(Shape shape, std::uint64_t seed, float lo, float hi,
                        bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false) {
    return full(kScalar, value, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const { return shape().numel(); }

  std::span<const float> data() const;
  // In-place access is reserved for tensor construction inside ops and for
  // optimizer updates; neither may happen while the tensor is on a live tape
  // path that has not been backpropagated yet.
  std::span<float> mutable_data() const;

  float at(int n, int c, int h, int w) const;
  float item() const;

  bool requires_grad() const;
  // Only meaningful on leaves. Turning it off drops any gradient buffer.
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const float> grad() const;
  // Allocates a zeroed buffer on first use; requires requires_grad().
  std::span<float> mutable_grad() const;
  void zero_grad();
  void clear_grad();

  Tensor clone() const;
  Tensor detach() const { return clone(); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  // Tape linkage. -1 for leaves and for tensors created outside recording.
  std::int64_t node() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
    std::int64_t node = -1;
  };
  std::shared_ptr<Impl> impl_;

  friend class Tape;
};

// Append-only record of differentiable operations. Each thread owns one tape;
// ops record into Tape::current() whenever an input requires a gradient and
// no NoGradGuard is active.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  static Tape& current();

  bool recording() const { return no_grad_depth_ == 0; }
  // True when an op with these inputs must produce a differentiable output.
  bool wants_grad(std::initializer_list<const Tensor*> inputs) const;

  void record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and runs backward rules in strict reverse
  // insertion order. Leaf gradients accumulate across calls; intermediate
  // gradients are reset at the start of every call.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  int no_grad_depth_ = 0;

  friend class NoGradGuard;
};

class NoGradGuard {
 public:
  NoGradGuard() { ++Tape::current().no_grad_depth_; }
  ~NoGradGuard() { --Tape::current().no_grad_depth_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline void backward(const Tensor& loss) { Tape::current().backward(loss); }

// Elementwise and structural primitives.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, int begin, int count);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Scalar combination sum_i weights[i] * terms[i]; all terms are [1,1,1,1].
Tensor weighted_sum(const std::vector<Tensor>& terms,
                    const std::vector<float>& weights);

// Dump format: ASCII header `TNSR N C H W\n` followed by N*C*H*W
// little-endian float32 values in row-major order.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace pyrseg
