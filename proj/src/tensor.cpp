#include "deformer/tensor.hpp"

#include "deformer/detail/gemm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

namespace deformer {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  // Id of the tape that recorded this tensor; 0 for leaves and constants.
  std::uint64_t tape_id = 0;
};

struct Access {
  static const std::shared_ptr<TensorImpl>& impl(const Tensor& t) { return t.impl_; }
  static Tensor wrap(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }
  static std::vector<Node>& nodes(Tape& tape) { return tape.nodes_; }
};

}  // namespace detail

using detail::Access;
using detail::TensorImpl;

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_tape_id{1};

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + what);
    }
  }
}

std::size_t normalize_axis(int axis, std::size_t ndim) {
  const int n = static_cast<int>(ndim);
  if (axis < -n || axis >= n) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(ndim));
  }
  return static_cast<std::size_t>(axis < 0 ? axis + n : axis);
}

// View of a shape as [outer, extent, inner] around one axis.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

const std::vector<double>& values(const Tensor& t) { return Access::impl(t)->data; }

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
  out << ']';
  return out.str();
}

// ---- Tensor -------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive: " + shape_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("shape " + shape_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  require_finite(data, "tensor construction");
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::leaf(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  t.impl_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ShapeError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(int axis) const { return shape()[normalize_axis(axis, ndim())]; }

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!impl_) throw ShapeError("use of an undefined tensor");
  return impl_->data;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

double Tensor::operator[](std::size_t flat_index) const { return data()[flat_index]; }

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch");
  std::size_t flat = 0;
  std::size_t k = 0;
  for (std::size_t i : index) {
    if (i >= s[k]) throw ShapeError("index out of range");
    flat = flat * s[k] + i;
    ++k;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

bool Tensor::is_leaf() const { return impl_ && impl_->tape_id == 0; }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape();
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

void Tensor::assign(std::span<const double> new_values) const {
  if (!is_leaf()) throw TapeError("assign() on a recorded intermediate tensor");
  if (new_values.size() != impl_->data.size()) throw ShapeError("assign() size mismatch");
  require_finite(new_values, "assign");
  std::copy(new_values.begin(), new_values.end(), impl_->data.begin());
}

void Tensor::set_requires_grad(bool value) const {
  if (!is_leaf()) throw TapeError("set_requires_grad() on a recorded intermediate tensor");
  impl_->requires_grad = value;
}

void Tensor::set(std::size_t flat_index, double value) const {
  if (!is_leaf()) throw TapeError("set() on a recorded intermediate tensor");
  if (!std::isfinite(value)) throw NumericError("set() with non-finite value");
  impl_->data.at(flat_index) = value;
}

// ---- Tape ---------------------------------------------------------------

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = nullptr;
}

void Tape::clear() { nodes_.clear(); }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

namespace detail {

bool BackwardContext::needs(std::size_t input) const {
  return node_.inputs.at(input)->requires_grad;
}

std::span<double> BackwardContext::grad_input(std::size_t input) {
  const TensorImpl* key = node_.inputs.at(input).get();
  auto [it, inserted] = grads_.try_emplace(key);
  if (inserted) it->second.assign(node_.inputs[input]->data.size(), 0.0);
  return it->second;
}

}  // namespace detail

Tensor make_op_result(Shape shape, std::vector<double> result,
                      const std::vector<Tensor>& inputs,
                      std::function<void(detail::BackwardContext&)> backward_fn,
                      const char* op_name) {
  require_finite(result, op_name);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(result);
  Tape* tape = g_active_tape;
  if (tape != nullptr) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      impl->requires_grad = true;
      impl->tape_id = tape->id();
      detail::Node node;
      node.inputs.reserve(inputs.size());
      for (const auto& in : inputs) node.inputs.push_back(Access::impl(in));
      node.output = impl;
      node.backward = std::move(backward_fn);
      node.name = op_name;
      Access::nodes(*tape).push_back(std::move(node));
    }
  }
  return Access::wrap(std::move(impl));
}

// ---- GradientMap / backward ----------------------------------------------

bool GradientMap::contains(const Tensor& leaf) const { return grads_.count(leaf.id()) != 0; }

Tensor GradientMap::at(const Tensor& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) throw std::out_of_range("no gradient recorded for this tensor");
  return it->second.grad;
}

Tensor GradientMap::get_or_zero(const Tensor& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it == grads_.end()) return Tensor::zeros(leaf.shape());
  return it->second.grad;
}

GradientMap backward(const Tensor& loss) {
  Tape* tape = g_active_tape;
  if (tape == nullptr) throw TapeError("backward() without an active tape");
  if (!loss.defined() || loss.numel() != 1) {
    throw TapeError("backward() requires a scalar loss");
  }
  const auto& loss_impl = Access::impl(loss);
  if (!loss_impl->requires_grad || loss_impl->tape_id != tape->id()) {
    throw TapeError("backward() on a loss that is not recorded on the active tape");
  }

  std::unordered_map<const TensorImpl*, std::vector<double>> grads;
  grads[loss_impl.get()] = {1.0};
  auto& nodes = Access::nodes(*tape);
  GradientMap result;
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    auto found = grads.find(it->output.get());
    if (found == grads.end()) continue;
    std::vector<double> grad_output = std::move(found->second);
    grads.erase(found);
    detail::BackwardContext ctx(*it, grad_output, grads);
    it->backward(ctx);
  }
  // What remains in `grads` belongs to leaves.
  for (const auto& node : nodes) {
    for (const auto& in : node.inputs) {
      if (in->tape_id != 0 || !in->requires_grad) continue;
      if (result.grads_.count(in.get())) continue;
      auto g = grads.find(in.get());
      if (g == grads.end()) continue;
      require_finite(g->second, "backward");
      result.grads_.emplace(in.get(), GradientMap::Entry{in, Tensor(in->shape, std::move(g->second))});
    }
  }
  tape->clear();
  return result;
}

// ---- broadcasting helpers -------------------------------------------------

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t n = std::max(a.size(), b.size());
  Shape out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
    const std::size_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + shape_string(a) + " and " + shape_string(b) +
                       " are not broadcast-compatible");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

namespace {

// Maps every flat output index to the flat index of each operand.
struct BroadcastIndex {
  enum class Kind { Same, Scalar, Suffix, General };
  Kind kind = Kind::Same;
  std::size_t operand_numel = 0;
  std::vector<std::size_t> map;  // General only

  BroadcastIndex(const Shape& operand, const Shape& out) {
    operand_numel = shape_numel(operand);
    const std::size_t out_numel = shape_numel(out);
    if (operand_numel == out_numel) {
      kind = Kind::Same;
      return;
    }
    if (operand_numel == 1) {
      kind = Kind::Scalar;
      return;
    }
    // Operand equal to a suffix of the output shape (e.g. a bias row).
    Shape trimmed = operand;
    while (!trimmed.empty() && trimmed.front() == 1) trimmed.erase(trimmed.begin());
    if (trimmed.size() <= out.size() &&
        std::equal(trimmed.begin(), trimmed.end(), out.end() - trimmed.size())) {
      kind = Kind::Suffix;
      return;
    }
    kind = Kind::General;
    const std::size_t n = out.size();
    std::vector<std::size_t> stride(n, 0);
    std::size_t s = 1;
    for (std::size_t i = n; i-- > 0;) {
      const std::size_t k = i + operand.size();
      if (k >= n) {
        const std::size_t d = operand[k - n];
        stride[i] = d == 1 ? 0 : s;
        s *= d;
      }
    }
    map.resize(out_numel);
    std::vector<std::size_t> counter(n, 0);
    std::size_t offset = 0;
    for (std::size_t flat = 0; flat < out_numel; ++flat) {
      map[flat] = offset;
      for (std::size_t i = n; i-- > 0;) {
        ++counter[i];
        offset += stride[i];
        if (counter[i] < out[i]) break;
        offset -= stride[i] * counter[i];
        counter[i] = 0;
      }
    }
  }

  std::size_t operator()(std::size_t flat) const {
    switch (kind) {
      case Kind::Same:
        return flat;
      case Kind::Scalar:
        return 0;
      case Kind::Suffix:
        return flat % operand_numel;
      case Kind::General:
        return map[flat];
    }
    return flat;
  }
};

template <typename Forward, typename GradA, typename GradB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Forward forward,
                 GradA grad_a, GradB grad_b) {
  Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  const std::size_t n = shape_numel(out_shape);
  auto ia = std::make_shared<BroadcastIndex>(a.shape(), out_shape);
  auto ib = std::make_shared<BroadcastIndex>(b.shape(), out_shape);
  const auto& da = values(a);
  const auto& db = values(b);
  std::vector<double> out(n);
  if (ia->kind == BroadcastIndex::Kind::Same && ib->kind == BroadcastIndex::Kind::Same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = forward(da[i], db[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = forward(da[(*ia)(i)], db[(*ib)(i)]);
  }
  return make_op_result(
      std::move(out_shape), std::move(out), {a, b},
      [a, b, ia, ib, grad_a, grad_b](detail::BackwardContext& ctx) {
        auto g = ctx.grad_output();
        const auto& va = values(a);
        const auto& vb = values(b);
        if (ctx.needs(0)) {
          auto ga = ctx.grad_input(0);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t ja = (*ia)(i);
            ga[ja] += grad_a(g[i], va[ja], vb[(*ib)(i)]);
          }
        }
        if (ctx.needs(1)) {
          auto gb = ctx.grad_input(1);
          for (std::size_t i = 0; i < g.size(); ++i) {
            const std::size_t jb = (*ib)(i);
            gb[jb] += grad_b(g[i], va[(*ia)(i)], vb[jb]);
          }
        }
      },
      name);
}

// `grad` receives (upstream, input value, output value).
template <typename Forward, typename Grad>
Tensor unary_op(const Tensor& x, const char* name, Forward forward, Grad grad) {
  const auto& dx = values(x);
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) out[i] = forward(dx[i]);
  auto result_values = std::make_shared<std::vector<double>>(out);
  return make_op_result(
      x.shape(), std::move(out), {x},
      [x, result_values, grad](detail::BackwardContext& ctx) {
        auto g = ctx.grad_output();
        auto gx = ctx.grad_input(0);
        const auto& vx = values(x);
        const auto& vy = *result_values;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += grad(g[i], vx[i], vy[i]);
      },
      name);
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("division by zero");
  }
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

Tensor add(const Tensor& a, double b) {
  return unary_op(
      a, "add_scalar", [b](double x) { return x + b; },
      [](double g, double, double) { return g; });
}

Tensor mul(const Tensor& a, double b) {
  return unary_op(
      a, "mul_scalar", [b](double x) { return x * b; },
      [b](double g, double, double) { return g * b; });
}

Tensor neg(const Tensor& x) { return mul(x, -1.0); }

Tensor exp(const Tensor& x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(v); },
      [](double g, double, double y) { return g * y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (v <= 0.0) throw DomainError("log of nonpositive value");
  }
  return unary_op(
      x, "log", [](double v) { return std::log(v); },
      [](double g, double v, double) { return g / v; });
}

Tensor pow(const Tensor& x, double exponent) {
  const bool integral = std::floor(exponent) == exponent;
  for (double v : x.data()) {
    if ((!integral && v <= 0.0) || (v == 0.0 && exponent < 1.0 && exponent != 0.0)) {
      throw DomainError("pow outside its domain");
    }
  }
  return unary_op(
      x, "pow", [exponent](double v) { return std::pow(v, exponent); },
      [exponent](double g, double v, double) {
        return exponent == 0.0 ? 0.0 : g * exponent * std::pow(v, exponent - 1.0);
      });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, "square", [](double v) { return v * v; },
      [](double g, double v, double) { return 2.0 * g * v; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double g, double v, double) { return v > 0.0 ? g : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double g, double, double y) { return g * (1.0 - y * y); });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double g, double, double y) { return g * y * (1.0 - y); });
}

// ---- linear algebra ---------------------------------------------------------

using detail::gemm_nn;
using detail::gemm_nt;
using detail::gemm_tn;

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) throw ShapeError("matmul needs rank >= 2 operands");
  const std::size_t n = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t m = sb.back();
  if (sb[sb.size() - 2] != k) {
    throw ShapeError("matmul inner extents differ: " + shape_string(sa) + " x " +
                     shape_string(sb));
  }
  const bool shared_b = sb.size() == 2;
  if (!shared_b && !std::equal(sa.begin(), sa.end() - 2, sb.begin(), sb.end() - 2)) {
    throw ShapeError("matmul batch extents differ: " + shape_string(sa) + " x " +
                     shape_string(sb));
  }
  const std::size_t batch = shape_numel(Shape(sa.begin(), sa.end() - 2));
  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(n);
  out_shape.push_back(m);
  std::vector<double> out(batch * n * m, 0.0);
  const double* pa = values(a).data();
  const double* pb = values(b).data();
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_nn(pa + i * n * k, pb + (shared_b ? 0 : i * k * m), out.data() + i * n * m, n, k, m);
  }
  return make_op_result(
      std::move(out_shape), std::move(out), {a, b},
      [a, b, batch, n, k, m, shared_b](detail::BackwardContext& ctx) {
        const double* g = ctx.grad_output().data();
        const double* pa = values(a).data();
        const double* pb = values(b).data();
        if (ctx.needs(0)) {
          double* ga = ctx.grad_input(0).data();
          for (std::size_t i = 0; i < batch; ++i) {
            gemm_nt(g + i * n * m, pb + (shared_b ? 0 : i * k * m), ga + i * n * k, n, k, m);
          }
        }
        if (ctx.needs(1)) {
          double* gb = ctx.grad_input(1).data();
          for (std::size_t i = 0; i < batch; ++i) {
            gemm_tn(pa + i * n * k, g + i * n * m, gb + (shared_b ? 0 : i * k * m), n, k, m);
          }
        }
      },
      "matmul");
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  const std::size_t n = s.size();
  if (axes.size() != n) throw ShapeError("permute: axes rank mismatch");
  std::vector<bool> seen(n, false);
  for (std::size_t a : axes) {
    if (a >= n || seen[a]) throw ShapeError("permute: invalid axes");
    seen[a] = true;
  }
  Shape out_shape(n);
  for (std::size_t i = 0; i < n; ++i) out_shape[i] = s[axes[i]];
  std::vector<std::size_t> in_stride(n, 1);
  for (std::size_t i = n - 1; i > 0; --i) in_stride[i - 1] = in_stride[i] * s[i];
  // source index for each destination flat index
  const std::size_t total = x.numel();
  auto source = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> counter(n, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    (*source)[flat] = offset;
    for (std::size_t i = n; i-- > 0;) {
      ++counter[i];
      offset += in_stride[axes[i]];
      if (counter[i] < out_shape[i]) break;
      offset -= in_stride[axes[i]] * counter[i];
      counter[i] = 0;
    }
  }
  const auto& vx = values(x);
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = vx[(*source)[i]];
  return make_op_result(
      std::move(out_shape), std::move(out), {x},
      [source](detail::BackwardContext& ctx) {
        auto g = ctx.grad_output();
        auto gx = ctx.grad_input(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[(*source)[i]] += g[i];
      },
      "permute");
}

Tensor transpose(const Tensor& x) {
  const std::size_t n = x.ndim();
  if (n < 2) throw ShapeError("transpose needs rank >= 2");
  std::vector<std::size_t> axes(n);
  std::iota(axes.begin(), axes.end(), 0);
  std::swap(axes[n - 1], axes[n - 2]);
  return permute(x, axes);
}

// ---- shape manipulation -----------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("reshape to zero extent");
  }
  return make_op_result(
      std::move(shape), values(x), {x},
      [](detail::BackwardContext& ctx) {
        auto g = ctx.grad_output();
        auto gx = ctx.grad_input(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      "reshape");
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size());
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax && s[i] != first[i]) {
        throw ShapeError("concat extent mismatch: " + shape_string(s) + " vs " +
                         shape_string(first));
      }
    }
    out_shape[ax] += s[ax];
  }
  const AxisSplit outer_split = split_at(out_shape, ax);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> extents;
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t e = p.shape()[ax];
    extents.push_back(e);
    const auto& vp = values(p);
    const std::size_t chunk = e * outer_split.inner;
    const std::size_t out_chunk = outer_split.extent * outer_split.inner;
    for (std::size_t o = 0; o < outer_split.outer; ++o) {
      std::copy_n(vp.begin() + o * chunk, chunk,
                  out.begin() + o * out_chunk + col * outer_split.inner);
    }
    col += e;
  }
  return make_op_result(
      std::move(out_shape), std::move(out), parts,
      [extents, outer_split](detail::BackwardContext& ctx) {
        auto g = ctx.grad_output();
        std::size_t col = 0;
        const std::size_t out_chunk = outer_split.extent * outer_split.inner;
        for (std::size_t k = 0; k < extents.size(); ++k) {
          const std::size_t chunk = extents[k] * outer_split.inner;
          if (ctx.needs(k)) {
            auto gk = ctx.grad_input(k);
            for (std::size_t o = 0; o < outer_split.outer; ++o) {
              const double* src = g.data() + o * out_chunk + col * outer_split.inner;
              double* dst = gk.data() + o * chunk;
              for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
            }
          }
          col += extents[k];
        }
      },
      "concat");
}

Tensor stack(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("stack of nothing");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size() + 1);
  std::vector<Tensor> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.shape() != first) throw ShapeError("stack shape mismatch");
    Shape s = first;
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(ax), 1);
    expanded.push_back(reshape(p, s));
  }
  return concat(expanded, static_cast<int>(ax));
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  if (length == 0 || start + length > x.shape()[ax]) {
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                     ") out of range for " + shape_string(x.shape()));
  }
  std::vector<std::size_t> indices(length);
  std::iota(indices.begin(), indices.end(), start);
  return index_select(x, axis, indices);
}

Tensor index_select(const Tensor& x, int axis, const std::vector<std::size_t>& indices) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  const AxisSplit s = split_at(x.shape(), ax);
  if (indices.empty()) throw ShapeError("index_select with no indices");
  for (std::size_t i : indices) {
    if (i >= s.extent) throw ShapeError("index_select index out of range");
  }
  Shape out_shape = x.shape();
  out_shape[ax] = indices.size();
  const auto& vx = values(x);
  std::vector<double> out(s.outer * indices.size() * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < indices.size(); ++k) {
      std::copy_n(vx.begin() + (o * s.extent + indices[k]) * s.inner, s.inner,
                  out.begin() + (o * indices.size() + k) * s.inner);
    }
  }
  return make_op_result(
      std::move(out_shape), std::move(out), {x},
      [s, indices](detail::BackwardContext& ctx) {
        auto g = ctx.grad_output();
        auto gx = ctx.grad_input(0);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t k = 0; k < indices.size(); ++k) {
            const double* src = g.data() + (o * indices.size() + k) * s.inner;
            double* dst = gx.data() + (o * s.extent + indices[k]) * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
          }
        }
      },
      "index_select");
}

// ---- reductions ---------------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  const AxisSplit s = split_at(x.shape(), ax);
  const auto& vx = values(x);
  std::vector<double> out(vx.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double peak = vx[base];
      for (std::size_t e = 1; e < s.extent; ++e) peak = std::max(peak, vx[base + e * s.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const double v = std::exp(vx[base + e * s.inner] - peak);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  }
  auto y = std::make_shared<std::vector<double>>(out);
  return make_op_result(
      x.shape(), std::move(out), {x},
      [s, y](detail::BackwardContext& ctx) {
        auto g = ctx.grad_output();
        auto gx = ctx.grad_input(0);
        const auto& vy = *y;
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            double dot = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) {
              dot += g[base + e * s.inner] * vy[base + e * s.inner];
            }
            for (std::size_t e = 0; e < s.extent; ++e) {
              const std::size_t i = base + e * s.inner;
              gx[i] += vy[i] * (g[i] - dot);
            }
          }
        }
      },
      "softmax");
}

namespace {

Shape reduced_shape(const Shape& shape, std::size_t ax, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[ax] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(ax));
    if (out.empty()) out.push_back(1);
  }
  return out;
}

Tensor sum_scaled(const Tensor& x, int axis, bool keepdim, bool average, const char* name) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  const AxisSplit s = split_at(x.shape(), ax);
  const double scale = average ? 1.0 / static_cast<double>(s.extent) : 1.0;
  const auto& vx = values(x);
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t e = 0; e < s.extent; ++e) {
      const double* src = vx.data() + (o * s.extent + e) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in];
    }
  }
  if (average) {
    for (double& v : out) v *= scale;
  }
  return make_op_result(
      reduced_shape(x.shape(), ax, keepdim), std::move(out), {x},
      [s, scale](detail::BackwardContext& ctx) {
        auto g = ctx.grad_output();
        auto gx = ctx.grad_input(0);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t e = 0; e < s.extent; ++e) {
            double* dst = gx.data() + (o * s.extent + e) * s.inner;
            const double* src = g.data() + o * s.inner;
            for (std::size_t in = 0; in < s.inner; ++in) dst[in] += scale * src[in];
          }
        }
      },
      name);
}

}  // namespace

Tensor sum(const Tensor& x) { return sum_scaled(reshape(x, {x.numel()}), 0, false, false, "sum"); }

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  return sum_scaled(x, axis, keepdim, false, "sum");
}

Tensor mean(const Tensor& x) {
  return sum_scaled(reshape(x, {x.numel()}), 0, false, true, "mean");
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  return sum_scaled(x, axis, keepdim, true, "mean");
}

Tensor max(const Tensor& x, int axis, bool keepdim) {
  const std::size_t ax = normalize_axis(axis, x.ndim());
  const AxisSplit s = split_at(x.shape(), ax);
  const auto& vx = values(x);
  std::vector<double> out(s.outer * s.inner);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      std::size_t best = base;
      for (std::size_t e = 1; e < s.extent; ++e) {
        const std::size_t i = base + e * s.inner;
        if (vx[i] > vx[best]) best = i;  // strict: the first maximum wins
      }
      out[o * s.inner + in] = vx[best];
      (*argmax)[o * s.inner + in] = best;
    }
  }
  return make_op_result(
      reduced_shape(x.shape(), ax, keepdim), std::move(out), {x},
      [argmax](detail::BackwardContext& ctx) {
        auto g = ctx.grad_output();
        auto gx = ctx.grad_input(0);
        for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
      },
      "max");
}

Tensor max(const Tensor& x) { return max(reshape(x, {x.numel()}), 0, false); }

// ---- gradient checking --------------------------------------------------------

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor& x, double h) {
  if (!(h > 0.0)) throw DomainError("finite_diff_check step must be positive");
  if (!x.requires_grad() || !x.is_leaf()) {
    throw TapeError("finite_diff_check needs a differentiable leaf");
  }
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f(x);
    if (loss.requires_grad()) {
      analytic = backward(loss).get_or_zero(x).to_vector();
    } else {
      analytic.assign(x.numel(), 0.0);
    }
  }
  auto eval = [&]() {
    const double v = f(x).item();
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite f");
    return v;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double original = x[i];
    x.set(i, original + h);
    const double up = eval();
    x.set(i, original - h);
    const double down = eval();
    x.set(i, original);
    const double numeric = (up - down) / (2.0 * h);
    const double err =
        std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace deformer
