#include "deformer/nn.hpp"

#include <cmath>
#include <memory>

#include "deformer/detail/gemm.hpp"

namespace deformer::nn {

ParameterStore::ParameterStore(std::uint64_t seed) : rng_(seed) {}

Tensor ParameterStore::register_parameter(const std::string& name, Tensor value) {
  if (index_.count(name)) throw ShapeError("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  params_.push_back({name, value});
  return value;
}

Tensor ParameterStore::add_weight(const std::string& name, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng_);
  return register_parameter(name, Tensor::leaf(std::move(shape), std::move(values)));
}

Tensor ParameterStore::add_constant(const std::string& name, Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return register_parameter(name, Tensor::leaf(std::move(shape), std::vector<double>(n, value)));
}

Tensor ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second].value;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

// ---- fused layers -----------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.ndim() != 2) throw ShapeError("linear weight must be 2-D");
  const std::size_t out_dim = weight.shape()[0];
  const std::size_t in_dim = weight.shape()[1];
  if (x.shape().back() != in_dim) {
    throw ShapeError("linear input " + shape_string(x.shape()) + " vs weight " +
                     shape_string(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != out_dim) throw ShapeError("linear bias size mismatch");
  const std::size_t rows = x.numel() / in_dim;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  std::vector<double> out(rows * out_dim, 0.0);
  detail::gemm_nt(x.data().data(), weight.data().data(), out.data(), rows, out_dim, in_dim);
  if (has_bias) {
    const auto b = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out_dim; ++o) out[r * out_dim + o] += b[o];
    }
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_op_result(
      std::move(out_shape), std::move(out), inputs,
      [x, weight, rows, in_dim, out_dim, has_bias](detail::BackwardContext& ctx) {
        const double* g = ctx.grad_output().data();
        if (ctx.needs(0)) {
          detail::gemm_nn(g, weight.data().data(), ctx.grad_input(0).data(), rows, out_dim,
                          in_dim);
        }
        if (ctx.needs(1)) {
          detail::gemm_tn(g, x.data().data(), ctx.grad_input(1).data(), rows, out_dim, in_dim);
        }
        if (has_bias && ctx.needs(2)) {
          auto gb = ctx.grad_input(2);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[r * out_dim + o];
          }
        }
      },
      "linear");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t dim = x.shape().back();
  if (gain.numel() != dim || bias.numel() != dim) throw ShapeError("layer_norm parameter size");
  const std::size_t rows = x.numel() / dim;
  const auto vx = x.data();
  const auto vg = gain.data();
  const auto vb = bias.data();
  auto normalized = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = vx.data() + r * dim;
    double mu = 0.0;
    for (std::size_t i = 0; i < dim; ++i) mu += row[i];
    mu /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t i = 0; i < dim; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(dim);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t i = 0; i < dim; ++i) {
      const double xhat = (row[i] - mu) * inv;
      (*normalized)[r * dim + i] = xhat;
      out[r * dim + i] = xhat * vg[i] + vb[i];
    }
  }
  return make_op_result(
      x.shape(), std::move(out), {x, gain, bias},
      [gain, normalized, inv_std, rows, dim](detail::BackwardContext& ctx) {
        const auto g = ctx.grad_output();
        const auto vg = gain.data();
        const auto& xhat = *normalized;
        if (ctx.needs(0)) {
          auto gx = ctx.grad_input(0);
          const double n = static_cast<double>(dim);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0;
            double mean_dx = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
              const double d = g[r * dim + i] * vg[i];
              mean_d += d;
              mean_dx += d * xhat[r * dim + i];
            }
            mean_d /= n;
            mean_dx /= n;
            for (std::size_t i = 0; i < dim; ++i) {
              const double d = g[r * dim + i] * vg[i];
              gx[r * dim + i] += (*inv_std)[r] * (d - mean_d - xhat[r * dim + i] * mean_dx);
            }
          }
        }
        if (ctx.needs(1)) {
          auto gg = ctx.grad_input(1);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < dim; ++i) gg[i] += g[r * dim + i] * xhat[r * dim + i];
          }
        }
        if (ctx.needs(2)) {
          auto gb = ctx.grad_input(2);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < dim; ++i) gb[i] += g[r * dim + i];
          }
        }
      },
      "layer_norm");
}

// ---- layers -------------------------------------------------------------------

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               bool with_bias) {
  weight_ = store.add_weight(name + ".weight", {out, in}, in);
  if (with_bias) bias_ = store.add_zeros(name + ".bias", {out});
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim) {
  // unit gain so a fresh layer is a plain standardization
  gain_ = store.add_constant(name + ".gain", {dim}, 1.0);
  bias_ = store.add_zeros(name + ".bias", {dim});
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, std::size_t dim,
                         std::size_t hidden)
    : in_(store, name + ".in", dim, hidden), out_(store, name + ".out", hidden, dim) {}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name,
                                       std::size_t model_dim, std::size_t head_count)
    : dim_(model_dim), heads_(head_count) {
  if (head_count == 0 || model_dim % head_count != 0) {
    throw ShapeError("model_dim " + std::to_string(model_dim) + " not divisible by " +
                     std::to_string(head_count) + " heads");
  }
  q_ = Linear(store, name + ".query", model_dim, model_dim);
  k_ = Linear(store, name + ".key", model_dim, model_dim, /*with_bias=*/false);
  v_ = Linear(store, name + ".value", model_dim, model_dim);
  o_ = Linear(store, name + ".output", model_dim, model_dim);
}

namespace {

// [N x D] -> [heads x N x D/heads]
Tensor split_heads(const Tensor& x, std::size_t heads) {
  const std::size_t n = x.shape()[0];
  const std::size_t d = x.shape()[1];
  if (heads == 1) return reshape(x, {1, n, d});
  return permute(reshape(x, {n, heads, d / heads}), {1, 0, 2});
}

Tensor merge_heads(const Tensor& x) {
  const std::size_t heads = x.shape()[0];
  const std::size_t n = x.shape()[1];
  const std::size_t dh = x.shape()[2];
  if (heads == 1) return reshape(x, {n, dh});
  return reshape(permute(x, {1, 0, 2}), {n, heads * dh});
}

}  // namespace

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys,
                                      const Tensor& values, Tensor* weights) const {
  if (queries.ndim() != 2 || keys.ndim() != 2 || values.ndim() != 2) {
    throw ShapeError("attention expects [tokens x dim] operands");
  }
  if (keys.shape()[0] != values.shape()[0]) {
    throw ShapeError("attention key/value token counts differ");
  }
  if (queries.shape()[1] != dim_ || keys.shape()[1] != dim_ || values.shape()[1] != dim_) {
    throw ShapeError("attention operand width differs from model_dim");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_ / heads_));
  Tensor q = split_heads(q_(queries), heads_);
  Tensor k = split_heads(k_(keys), heads_);
  Tensor v = split_heads(v_(values), heads_);
  Tensor attn = softmax(mul(matmul(q, transpose(k)), scale), -1);
  if (weights != nullptr) *weights = attn;
  return o_(merge_heads(matmul(attn, v)));
}

EncoderLayer::EncoderLayer(ParameterStore& store, const std::string& name, std::size_t dim,
                           std::size_t heads, std::size_t ffn_dim)
    : norm_attn_(store, name + ".norm_attn", dim),
      attn_(store, name + ".attn", dim, heads),
      norm_ffn_(store, name + ".norm_ffn", dim),
      ffn_(store, name + ".ffn", dim, ffn_dim) {}

Tensor EncoderLayer::operator()(const Tensor& tokens) const {
  Tensor normed = norm_attn_(tokens);
  Tensor x = add(tokens, attn_(normed, normed, normed));
  return add(x, ffn_(norm_ffn_(x)));
}

DecoderLayer::DecoderLayer(ParameterStore& store, const std::string& name, std::size_t dim,
                           std::size_t heads, std::size_t ffn_dim)
    : norm_query_(store, name + ".norm_query", dim),
      norm_memory_(store, name + ".norm_memory", dim),
      attn_(store, name + ".cross_attn", dim, heads),
      norm_ffn_(store, name + ".norm_ffn", dim),
      ffn_(store, name + ".ffn", dim, ffn_dim) {}

Tensor DecoderLayer::operator()(const Tensor& query, const Tensor& memory) const {
  Tensor mem = norm_memory_(memory);
  Tensor x = add(query, attn_(norm_query_(query), mem, mem));
  return add(x, ffn_(norm_ffn_(x)));
}

Tensor encoder_forward(const Tensor& tokens, const std::vector<EncoderLayer>& layers) {
  if (tokens.ndim() != 2) throw ShapeError("encoder expects [tokens x dim]");
  Tensor x = tokens;
  for (const auto& layer : layers) x = layer(x);
  return x;
}

Tensor decoder_forward(const Tensor& query, const Tensor& memory,
                       const std::vector<DecoderLayer>& layers) {
  if (query.ndim() != 2 || memory.ndim() != 2) throw ShapeError("decoder expects 2-D operands");
  Tensor x = query;
  for (const auto& layer : layers) x = layer(x, memory);
  return x;
}

// ---- recurrent ------------------------------------------------------------------

GruLayer::GruLayer(ParameterStore& store, const std::string& name, std::size_t input_dim,
                   std::size_t hidden_dim)
    : hidden_(hidden_dim),
      input_(store, name + ".input", input_dim, 3 * hidden_dim),
      hidden_proj_(store, name + ".hidden", hidden_dim, 3 * hidden_dim) {}

Tensor GruLayer::operator()(const Tensor& inputs, bool reverse) const {
  if (inputs.ndim() != 2) throw ShapeError("GRU expects [T x D] input");
  const std::size_t steps = inputs.shape()[0];
  const std::size_t h = hidden_;
  Tensor projected = input_(inputs);  // [T x 3H]
  Tensor state = Tensor::zeros({1, h});
  std::vector<Tensor> outputs(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    Tensor gi = slice(projected, 0, t, 1);
    Tensor gh = hidden_proj_(state);
    Tensor reset = sigmoid(add(slice(gi, 1, 0, h), slice(gh, 1, 0, h)));
    Tensor update = sigmoid(add(slice(gi, 1, h, h), slice(gh, 1, h, h)));
    Tensor candidate = tanh(add(slice(gi, 1, 2 * h, h), mul(reset, slice(gh, 1, 2 * h, h))));
    state = add(candidate, mul(update, sub(state, candidate)));
    outputs[t] = state;
  }
  return concat(outputs, 0);
}

BiGruLayer::BiGruLayer(ParameterStore& store, const std::string& name, std::size_t input_dim,
                       std::size_t hidden_dim)
    : forward_(store, name + ".fw", input_dim, hidden_dim),
      backward_(store, name + ".bw", input_dim, hidden_dim) {}

Tensor BiGruLayer::operator()(const Tensor& inputs) const {
  return concat({forward_(inputs, false), backward_(inputs, true)}, 1);
}

// ---- positional embeddings ----------------------------------------------------------

PositionalEmbedding2D::PositionalEmbedding2D(ParameterStore& store, const std::string& name,
                                             std::size_t height, std::size_t width,
                                             std::size_t dim, PositionalKind kind) {
  if (kind == PositionalKind::Learned) {
    table_ = store.add_weight(name + ".table", {height * width, dim}, dim);
    return;
  }
  // First half of the channels encodes the row, second half the column.
  std::vector<double> values(height * width * dim, 0.0);
  const std::size_t half = dim / 2;
  auto encode = [](double pos, std::size_t channel, std::size_t width_channels) {
    const std::size_t pair = channel / 2;
    const double freq =
        std::pow(10000.0, -2.0 * static_cast<double>(pair) / static_cast<double>(width_channels));
    return channel % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq);
  };
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      double* row = values.data() + (r * width + c) * dim;
      for (std::size_t i = 0; i < half; ++i) row[i] = encode(static_cast<double>(r), i, half);
      for (std::size_t i = half; i < dim; ++i) {
        row[i] = encode(static_cast<double>(c), i - half, dim - half);
      }
    }
  }
  table_ = Tensor({height * width, dim}, std::move(values));
}

}  // namespace deformer::nn
