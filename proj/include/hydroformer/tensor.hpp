#pragma once

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Operations record themselves on the thread's active Tape when at least one
// input requires a gradient. With no active tape, operations are plain
// forward computations and never touch gradient buffers, which makes
// inference on a frozen model safe from several threads at once.
//
//   Tape tape;                       // becomes the active tape for this scope
//   Tensor loss = ops::mse(model_out, target);
//   tape.backward(loss);             // fills .grad() of every reachable leaf

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hydro {

#ifdef HYDROFORMER_FLOAT32
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty until first accumulation
  bool requires_grad = false;
  const void* tape = nullptr;  // tape that produced this tensor, if any
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<real> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, real value, bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<real>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<real> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // first dimension of a 2-D tensor
  std::size_t cols() const;  // last dimension

  std::span<const real> data() const;
  /// Writable view for parameter updates; only valid on leaf tensors.
  std::span<real> mutable_data();
  real item() const;
  real at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Gradient buffer; zeros if nothing has been accumulated yet.
  std::vector<real> grad() const;
  std::span<real> mutable_grad();
  void zero_grad();

  /// Copy of the values with no gradient tracking.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;
  friend Tensor make_result(Shape, std::vector<real>, const char*);
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of differentiable operations. Constructing a Tape makes it
/// the active tape of the calling thread until it is destroyed; tapes nest.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Tape currently recording on this thread, or nullptr.
  static Tape* active();

  /// Reverse sweep from a scalar loss recorded on this tape. Gradients of
  /// leaves accumulate; call reset() before reusing the tape.
  void backward(const Tensor& loss);
  void reset();
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  using BackwardFn = std::function<void(const std::vector<real>& out_grad)>;
  void record(const Tensor& out, std::vector<Tensor> inputs, BackwardFn fn);

 private:
  struct Entry {
    std::shared_ptr<detail::TensorImpl> out;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Suspends recording for the current scope (evaluation passes inside training).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

/// Row-major boolean matrix; true means the position takes part in softmax.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool value);
  static Mask all(std::size_t rows, std::size_t cols) { return Mask(rows, cols, true); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool operator()(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits_[r * cols_ + c] = v ? 1 : 0; }
  std::size_t count_row(std::size_t r) const;
  std::size_t count() const;
  Mask operator&(const Mask& other) const;
  bool operator==(const Mask& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<unsigned char> bits_;
};

enum class ElementwiseKind { add, sub, mul };
enum class ActivationKind { tanh, relu, sigmoid, leaky_relu, elu, softplus };

ActivationKind parse_activation(const std::string& name);
std::string to_string(ActivationKind kind);

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::mul); }
Tensor scale(const Tensor& a, real factor);

/// x[m×n] + bias[n] added to every row.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor activation(const Tensor& x, ActivationKind kind);

/// Row-wise softmax over positions where mask is true; masked positions get
/// weight exactly 0 and receive no gradient. A row with no unmasked entry is
/// an error.
Tensor masked_softmax(const Tensor& scores, const Mask& mask);
Tensor softmax(const Tensor& scores);

/// Normalizes each row over the last axis, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps = 1e-5);

Tensor mse(const Tensor& pred, const Tensor& target);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);

}  // namespace ops

}  // namespace hydro
