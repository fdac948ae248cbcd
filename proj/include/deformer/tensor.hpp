#pragma once

// Dense 64-bit tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle onto an immutable value. Operations executed
// while a Tape is active (see TapeScope) record themselves when any input
// requires a gradient; backward() then replays the tape in reverse.
//
// Broadcasting aligns trailing dimensions: two extents are compatible when
// they are equal or one of them is 1, and a missing leading dimension acts
// as 1. Gradients flowing into a broadcast operand are summed over the
// broadcast dimensions.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "deformer/error.hpp"

namespace deformer {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class GradientMap;

namespace detail {
struct TensorImpl;
class BackwardContext;
struct Access;
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  // Constant (non-differentiable) tensor. Throws ShapeError when the data
  // length does not match the shape and NumericError on non-finite input.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  // Differentiable leaf (a parameter or an input under gradient check).
  static Tensor leaf(Shape shape, std::vector<double> data);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::vector<double> to_vector() const;
  double item() const;
  double operator[](std::size_t flat_index) const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  bool is_leaf() const;
  // Same values, no graph history, no gradient requirement.
  Tensor detach() const;

  // Overwrites the values of a leaf in place. Used by optimizers and by
  // finite-difference probes; forbidden on recorded intermediates.
  void assign(std::span<const double> values) const;
  void set(std::size_t flat_index, double value) const;
  // Freezes or unfreezes a leaf; the flag is read both while recording and
  // during backward(), so keep it fixed across both.
  void set_requires_grad(bool value) const;

  const detail::TensorImpl* id() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;

  friend struct detail::Access;
};

namespace detail {

struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::shared_ptr<TensorImpl> output;
  std::function<void(BackwardContext&)> backward;
  const char* name;
};

class BackwardContext {
 public:
  BackwardContext(const Node& node, std::span<const double> grad_output,
                  std::unordered_map<const TensorImpl*, std::vector<double>>& grads)
      : node_(node), grad_output_(grad_output), grads_(grads) {}

  std::span<const double> grad_output() const { return grad_output_; }
  bool needs(std::size_t input) const;
  // Accumulation buffer for input k; zero-initialized on first access.
  std::span<double> grad_input(std::size_t input);

 private:
  const Node& node_;
  std::span<const double> grad_output_;
  std::unordered_map<const TensorImpl*, std::vector<double>>& grads_;
};

}  // namespace detail

class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }
  void clear();

 private:
  std::vector<detail::Node> nodes_;
  std::uint64_t id_;

  friend struct detail::Access;
};

// Makes `tape` the recording tape of the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

Tape* active_tape();

// Gradients of a scalar loss with respect to every differentiable leaf that
// contributed to it.
class GradientMap {
 public:
  bool contains(const Tensor& leaf) const;
  // Throws std::out_of_range when the leaf did not contribute.
  Tensor at(const Tensor& leaf) const;
  // Zero tensor shaped like `leaf` when it did not contribute.
  Tensor get_or_zero(const Tensor& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  struct Entry {
    std::shared_ptr<detail::TensorImpl> leaf;
    Tensor grad;
  };
  std::unordered_map<const detail::TensorImpl*, Entry> grads_;
  friend GradientMap backward(const Tensor& loss);
};

// Runs the active tape backwards from `loss` and clears it. Throws TapeError
// for a non-scalar loss or one that was not recorded on the active tape.
GradientMap backward(const Tensor& loss);

// Builds a tensor from freshly computed values. When a tape is active and
// any input requires a gradient, the result is recorded with `backward_fn`.
// Throws NumericError (naming `op_name`) on non-finite values.
Tensor make_op_result(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                      std::function<void(detail::BackwardContext&)> backward_fn,
                      const char* op_name);

// ---- elementwise --------------------------------------------------------

Shape broadcast_shapes(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Throws DomainError when any divisor is zero.
Tensor div(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double b);
Tensor mul(const Tensor& a, double b);

Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
// Throws DomainError on nonpositive input.
Tensor log(const Tensor& x);
// Non-integer exponents require positive input (DomainError otherwise).
Tensor pow(const Tensor& x, double exponent);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return add(a, -b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }
inline Tensor operator-(const Tensor& x) { return neg(x); }

// ---- linear algebra -----------------------------------------------------

// [..., n, k] x [..., k, m] -> [..., n, m]. Leading (batch) dimensions must
// match exactly, or `b` may be 2-D and is then shared across the batch.
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two dimensions.
Tensor transpose(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

// ---- shape manipulation -------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor stack(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
// Picks entries along `axis`; indices may repeat (gradients accumulate).
Tensor index_select(const Tensor& x, int axis, const std::vector<std::size_t>& indices);

// ---- reductions ---------------------------------------------------------

Tensor softmax(const Tensor& x, int axis);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);
// The gradient flows to one element per reduced slice: the first maximum.
Tensor max(const Tensor& x);
Tensor max(const Tensor& x, int axis, bool keepdim = false);

// ---- gradient checking --------------------------------------------------

// Compares backward() against central differences of `f` around the leaf
// `x`, perturbing x in place and restoring it afterwards. Returns the
// largest |analytic - numeric| / (|analytic| + |numeric| + 1e-12) over all
// coordinates of x. Throws NumericError if f evaluates to a non-finite value.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x,
                         double h = 1e-5);

}  // namespace deformer
