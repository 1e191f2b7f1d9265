#include "hydroformer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hydroformer/errors.hpp"

namespace hydro {

namespace {

thread_local Tape* g_active_tape = nullptr;

using ImplPtr = std::shared_ptr<detail::TensorImpl>;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
}

std::vector<real>& grad_buffer(detail::TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), real{0});
  return t.grad;
}

bool any_requires_grad(const std::vector<Tensor>& inputs) {
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

void require_2d(const Tensor& t, const char* op) {
  if (!t.defined() || t.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " +
                     (t.defined() ? shape_to_string(t.shape()) : std::string("undefined")));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor make_result(Shape shape, std::vector<real> values, const char* op) {
  for (real v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value produced");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

namespace {

// Registers `fn` on the active tape when any input needs a gradient.
void maybe_record(Tensor& out, std::vector<Tensor> inputs, Tape::BackwardFn fn) {
  Tape* tape = Tape::active();
  if (!tape || !any_requires_grad(inputs)) return;
  tape->record(out, std::move(inputs), std::move(fn));
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<real> values, bool requires_grad) {
  check_shape(shape);
  if (product(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape) + " needs " +
                     std::to_string(product(shape)) + " values, got " + std::to_string(values.size()));
  }
  for (real v : values) {
    if (!std::isfinite(v)) throw NumericError("tensor: non-finite initial value");
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0, requires_grad); }

Tensor Tensor::filled(Shape shape, real value, bool requires_grad) {
  check_shape(shape);
  std::vector<real> values(product(shape), value);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(real value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<real>> rows, bool requires_grad) {
  std::vector<real> values;
  const std::size_t ncols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& row : rows) {
    if (row.size() != ncols) throw ShapeError("matrix: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({rows.size(), ncols}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<real> values, bool requires_grad) {
  return Tensor({values.size()}, std::vector<real>(values), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ShapeError("undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 1 ? 1 : s.front();
}

std::size_t Tensor::cols() const { return shape().back(); }

std::span<const real> Tensor::data() const {
  if (!impl_) throw ShapeError("undefined tensor");
  return impl_->data;
}

std::span<real> Tensor::mutable_data() {
  if (!impl_) throw ShapeError("undefined tensor");
  if (impl_->tape) throw AutogradError("mutable_data: tensor was produced by a recorded operation");
  return impl_->data;
}

real Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

real Tensor::at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!impl_) throw ShapeError("undefined tensor");
  impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::vector<real> Tensor::grad() const {
  if (!impl_) throw ShapeError("undefined tensor");
  if (impl_->grad.empty()) return std::vector<real>(impl_->data.size(), real{0});
  return impl_->grad;
}

std::span<real> Tensor::mutable_grad() {
  if (!impl_) throw ShapeError("undefined tensor");
  return grad_buffer(*impl_);
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  for (auto& e : entries_) e.out->tape = nullptr;
  if (g_active_tape == this) g_active_tape = previous_;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const Tensor& out, std::vector<Tensor> inputs, BackwardFn fn) {
  if (consumed_) throw AutogradError("tape already consumed by backward(); call reset() first");
  Entry e;
  e.out = out.impl_;
  e.out->requires_grad = true;
  e.out->tape = this;
  e.inputs.reserve(inputs.size());
  for (auto& t : inputs) e.inputs.push_back(t.impl_);
  e.backward = std::move(fn);
  entries_.push_back(std::move(e));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw AutogradError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
  }
  if (consumed_) throw AutogradError("backward: called twice without reset()");
  if (loss.impl_->tape != this) throw AutogradError("backward: loss was not recorded on this tape");
  consumed_ = true;

  grad_buffer(*loss.impl_)[0] += 1;

  // Entries are stored in execution order, so the reverse walk is a valid
  // topological order; each entry runs once.
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->out->grad.empty()) continue;
    it->backward(it->out->grad);
  }
}

void Tape::reset() {
  for (auto& e : entries_) e.out->tape = nullptr;
  entries_.clear();
  consumed_ = false;
}

NoGradGuard::NoGradGuard() : saved_(g_active_tape) { g_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_active_tape = saved_; }

// ---------------------------------------------------------------------------
// Mask

Mask::Mask(std::size_t rows, std::size_t cols, bool value)
    : rows_(rows), cols_(cols), bits_(rows * cols, value ? 1 : 0) {}

std::size_t Mask::count_row(std::size_t r) const {
  return static_cast<std::size_t>(
      std::count(bits_.begin() + r * cols_, bits_.begin() + (r + 1) * cols_, 1));
}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }

Mask Mask::operator&(const Mask& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw ShapeError("mask intersection: shape mismatch");
  Mask out(rows_, cols_, false);
  for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[i] = bits_[i] & other.bits_[i];
  return out;
}

// ---------------------------------------------------------------------------
// Activations

ActivationKind parse_activation(const std::string& name) {
  if (name == "tanh") return ActivationKind::tanh;
  if (name == "relu") return ActivationKind::relu;
  if (name == "sigmoid") return ActivationKind::sigmoid;
  if (name == "leaky_relu") return ActivationKind::leaky_relu;
  if (name == "elu") return ActivationKind::elu;
  if (name == "softplus") return ActivationKind::softplus;
  throw ConfigError("unknown activation kind '" + name +
                    "' (expected tanh, relu, sigmoid, leaky_relu, elu, softplus)");
}

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::relu: return "relu";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::elu: return "elu";
    case ActivationKind::softplus: return "softplus";
  }
  return "?";
}

namespace ops {

namespace {
constexpr real kLeakySlope = real(0.01);
constexpr real kEluAlpha = real(1);

real activate(real x, ActivationKind kind) {
  switch (kind) {
    case ActivationKind::tanh: return std::tanh(x);
    case ActivationKind::relu: return x > 0 ? x : real{0};
    case ActivationKind::sigmoid: return real(1) / (real(1) + std::exp(-x));
    case ActivationKind::leaky_relu: return x > 0 ? x : kLeakySlope * x;
    case ActivationKind::elu: return x > 0 ? x : kEluAlpha * std::expm1(x);
    case ActivationKind::softplus: return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return x;
}

// Derivative expressed through input x and output y.
real activate_grad(real x, real y, ActivationKind kind) {
  switch (kind) {
    case ActivationKind::tanh: return real(1) - y * y;
    case ActivationKind::relu: return x > 0 ? real(1) : real(0);
    case ActivationKind::sigmoid: return y * (real(1) - y);
    case ActivationKind::leaky_relu: return x > 0 ? real(1) : kLeakySlope;
    case ActivationKind::elu: return x > 0 ? real(1) : y + kEluAlpha;
    case ActivationKind::softplus: return real(1) / (real(1) + std::exp(-x));
  }
  return 1;
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const auto A = a.data();
  const auto B = b.data();
  std::vector<real> c(m * n, real{0});
  for (std::size_t i = 0; i < m; ++i) {
    real* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const real aip = A[i * k + p];
      const real* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  Tensor out = make_result({m, n}, std::move(c), "matmul");
  auto ai = a.impl(), bi = b.impl();
  maybe_record(out, {a, b}, [ai, bi, m, k, n](const std::vector<real>& g) {
    if (ai->requires_grad) {
      auto& ga = grad_buffer(*ai);  // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          real s = 0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bi->data[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (bi->requires_grad) {
      auto& gb = grad_buffer(*bi);  // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const real aip = ai->data[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const auto A = a.data();
  std::vector<real> t(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = A[i * n + j];
  Tensor out = make_result({n, m}, std::move(t), "transpose");
  auto ai = a.impl();
  maybe_record(out, {a}, [ai, m, n](const std::vector<real>& g) {
    auto& ga = grad_buffer(*ai);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
  return out;
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind) {
  require_same_shape(a, b, "elementwise");
  const auto A = a.data();
  const auto B = b.data();
  std::vector<real> r(A.size());
  switch (kind) {
    case ElementwiseKind::add:
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = A[i] + B[i];
      break;
    case ElementwiseKind::sub:
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = A[i] - B[i];
      break;
    case ElementwiseKind::mul:
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = A[i] * B[i];
      break;
  }
  Tensor out = make_result(a.shape(), std::move(r), "elementwise");
  auto ai = a.impl(), bi = b.impl();
  maybe_record(out, {a, b}, [ai, bi, kind](const std::vector<real>& g) {
    const std::size_t n = g.size();
    if (ai->requires_grad) {
      auto& ga = grad_buffer(*ai);
      if (kind == ElementwiseKind::mul) {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bi->data[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
    }
    if (bi->requires_grad) {
      auto& gb = grad_buffer(*bi);
      switch (kind) {
        case ElementwiseKind::add:
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
          break;
        case ElementwiseKind::sub:
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
          break;
        case ElementwiseKind::mul:
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * ai->data[i];
          break;
      }
    }
  });
  return out;
}

Tensor scale(const Tensor& a, real factor) {
  const auto A = a.data();
  std::vector<real> r(A.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = A[i] * factor;
  Tensor out = make_result(a.shape(), std::move(r), "scale");
  auto ai = a.impl();
  maybe_record(out, {a}, [ai, factor](const std::vector<real>& g) {
    auto& ga = grad_buffer(*ai);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_2d(x, "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n) {
    throw ShapeError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match width of " +
                     shape_to_string(x.shape()));
  }
  const auto X = x.data();
  const auto b = bias.data();
  std::vector<real> r(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) r[i * n + j] = X[i * n + j] + b[j];
  Tensor out = make_result(x.shape(), std::move(r), "add_bias");
  auto xi = x.impl(), bi = bias.impl();
  maybe_record(out, {x, bias}, [xi, bi, m, n](const std::vector<real>& g) {
    if (xi->requires_grad) {
      auto& gx = grad_buffer(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (bi->requires_grad) {
      auto& gb = grad_buffer(*bi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
  return out;
}

Tensor activation(const Tensor& x, ActivationKind kind) {
  const auto X = x.data();
  std::vector<real> r(X.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!std::isfinite(X[i])) throw NumericError("activation: non-finite input");
    r[i] = activate(X[i], kind);
  }
  Tensor out = make_result(x.shape(), std::move(r), "activation");
  auto xi = x.impl();
  auto oi = out.impl();
  std::weak_ptr<detail::TensorImpl> weak_out = oi;
  maybe_record(out, {x}, [xi, weak_out, kind](const std::vector<real>& g) {
    auto o = weak_out.lock();
    auto& gx = grad_buffer(*xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * activate_grad(xi->data[i], o->data[i], kind);
  });
  return out;
}

Tensor masked_softmax(const Tensor& scores, const Mask& mask) {
  require_2d(scores, "masked_softmax");
  const std::size_t m = scores.rows(), n = scores.cols();
  if (mask.rows() != m || mask.cols() != n) {
    throw ShapeError("masked_softmax: mask " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                     " does not match scores " + shape_to_string(scores.shape()));
  }
  const auto S = scores.data();
  std::vector<real> w(m * n, real{0});
  for (std::size_t i = 0; i < m; ++i) {
    real row_max = 0;
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      if (!any || S[i * n + j] > row_max) row_max = S[i * n + j];
      any = true;
    }
    if (!any) throw NumericError("masked_softmax: row " + std::to_string(i) + " is fully masked");
    real total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      const real e = std::exp(S[i * n + j] - row_max);
      w[i * n + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] /= total;
  }
  Tensor out = make_result({m, n}, std::move(w), "masked_softmax");
  auto si = scores.impl();
  std::weak_ptr<detail::TensorImpl> weak_out = out.impl();
  maybe_record(out, {scores}, [si, weak_out, m, n](const std::vector<real>& g) {
    auto o = weak_out.lock();
    auto& gs = grad_buffer(*si);
    // Masked weights are exactly zero, so their gradient term vanishes.
    for (std::size_t i = 0; i < m; ++i) {
      real dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * o->data[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        const real y = o->data[i * n + j];
        if (y != 0) gs[i * n + j] += y * (g[i * n + j] - dot);
      }
    }
  });
  return out;
}

Tensor softmax(const Tensor& scores) {
  require_2d(scores, "softmax");
  return masked_softmax(scores, Mask::all(scores.rows(), scores.cols()));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
  if (!x.defined() || x.cols() == 0) throw ShapeError("layer_norm: empty last dimension");
  const std::size_t d = x.cols();
  const std::size_t m = x.numel() / d;
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(d) + " elements");
  }
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  const auto X = x.data();
  const auto G = gamma.data();
  const auto B = beta.data();
  std::vector<real> y(m * d), xhat(m * d), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const real* row = X.data() + i * d;
    real mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<real>(d);
    real var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<real>(d);
    inv_std[i] = real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * inv_std[i];
      y[i * d + j] = xhat[i * d + j] * G[j] + B[j];
    }
  }
  Tensor out = make_result(x.shape(), std::move(y), "layer_norm");
  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  maybe_record(out, {x, gamma, beta},
               [xi, gi, bi, m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](const std::vector<real>& g) {
                 if (gi->requires_grad) {
                   auto& gg = grad_buffer(*gi);
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
                 }
                 if (bi->requires_grad) {
                   auto& gb = grad_buffer(*bi);
                   for (std::size_t i = 0; i < m; ++i)
                     for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
                 }
                 if (xi->requires_grad) {
                   auto& gx = grad_buffer(*xi);
                   for (std::size_t i = 0; i < m; ++i) {
                     real mean_dxhat = 0, mean_dxhat_xhat = 0;
                     for (std::size_t j = 0; j < d; ++j) {
                       const real dxhat = g[i * d + j] * gi->data[j];
                       mean_dxhat += dxhat;
                       mean_dxhat_xhat += dxhat * xhat[i * d + j];
                     }
                     mean_dxhat /= static_cast<real>(d);
                     mean_dxhat_xhat /= static_cast<real>(d);
                     for (std::size_t j = 0; j < d; ++j) {
                       const real dxhat = g[i * d + j] * gi->data[j];
                       gx[i * d + j] += inv_std[i] * (dxhat - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
                     }
                   }
                 }
               });
  return out;
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  if (pred.numel() != target.numel() || pred.shape() != target.shape()) {
    throw ShapeError("mse: shape mismatch " + shape_to_string(pred.shape()) + " vs " +
                     shape_to_string(target.shape()));
  }
  const auto P = pred.data();
  const auto T = target.data();
  const std::size_t n = P.size();
  real acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += (P[i] - T[i]) * (P[i] - T[i]);
  Tensor out = make_result({1}, {acc / static_cast<real>(n)}, "mse");
  auto pi = pred.impl(), ti = target.impl();
  maybe_record(out, {pred, target}, [pi, ti, n](const std::vector<real>& g) {
    const real c = real(2) * g[0] / static_cast<real>(n);
    if (pi->requires_grad) {
      auto& gp = grad_buffer(*pi);
      for (std::size_t i = 0; i < n; ++i) gp[i] += c * (pi->data[i] - ti->data[i]);
    }
    if (ti->requires_grad) {
      auto& gt = grad_buffer(*ti);
      for (std::size_t i = 0; i < n; ++i) gt[i] -= c * (pi->data[i] - ti->data[i]);
    }
  });
  return out;
}

Tensor sum(const Tensor& x) {
  const auto X = x.data();
  real acc = 0;
  for (real v : X) acc += v;
  Tensor out = make_result({1}, {acc}, "sum");
  auto xi = x.impl();
  maybe_record(out, {x}, [xi](const std::vector<real>& g) {
    auto& gx = grad_buffer(*xi);
    for (auto& v : gx) v += g[0];
  });
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), real(1) / static_cast<real>(x.numel())); }

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_2d(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > n) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_to_string(x.shape()));
  }
  const std::size_t w = end - begin;
  const auto X = x.data();
  std::vector<real> r(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(X.data() + i * n + begin, w, r.data() + i * w);
  Tensor out = make_result({m, w}, std::move(r), "slice_cols");
  auto xi = x.impl();
  maybe_record(out, {x}, [xi, m, n, w, begin](const std::vector<real>& g) {
    auto& gx = grad_buffer(*xi);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * n + begin + j] += g[i * w + j];
  });
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_2d(x, "slice_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > m) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_to_string(x.shape()));
  }
  const auto X = x.data();
  std::vector<real> r(X.begin() + begin * n, X.begin() + end * n);
  Tensor out = make_result({end - begin, n}, std::move(r), "slice_rows");
  auto xi = x.impl();
  maybe_record(out, {x}, [xi, n, begin](const std::vector<real>& g) {
    auto& gx = grad_buffer(*xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
    total += p.cols();
  }
  std::vector<real> r(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    const auto P = p.data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(P.data() + i * w, w, r.data() + i * total + offset);
    offset += w;
  }
  Tensor out = make_result({m, total}, std::move(r), "concat_cols");
  std::vector<std::shared_ptr<detail::TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  maybe_record(out, parts, [impls, m, total](const std::vector<real>& g) {
    std::size_t off = 0;
    for (const auto& pi : impls) {
      const std::size_t w = pi->shape.back();
      if (pi->requires_grad) {
        auto& gp = grad_buffer(*pi);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off + j];
      }
      off += w;
    }
  });
  return out;
}

}  // namespace ops

}  // namespace hydro
