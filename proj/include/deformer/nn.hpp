#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "deformer/tensor.hpp"

namespace deformer::nn {

struct NamedParameter {
  std::string name;
  Tensor value;
};

// Owns every trainable leaf of a model in registration order. Weights are
// drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) with a generator
// seeded once at construction, so the store is a pure function of the seed
// and the registration sequence.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed);

  Tensor add_weight(const std::string& name, Shape shape, std::size_t fan_in);
  Tensor add_constant(const std::string& name, Shape shape, double value);
  Tensor add_zeros(const std::string& name, Shape shape) {
    return add_constant(name, std::move(shape), 0.0);
  }

  const std::vector<NamedParameter>& parameters() const { return params_; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor at(const std::string& name) const;
  std::size_t scalar_count() const;

 private:
  Tensor register_parameter(const std::string& name, Tensor value);

  std::mt19937_64 rng_;
  std::vector<NamedParameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// y = x W^T + b over the last axis of x. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Normalizes the last axis to zero mean / unit variance, then scales by
// `gain` and shifts by `bias`.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return linear(x, weight_, bias_); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;  // [out x in]
  Tensor bias_;    // [out] or undefined
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain_, bias_); }

 private:
  Tensor gain_;
  Tensor bias_;
};

// Two-layer MLP with ReLU in between.
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, std::size_t dim,
              std::size_t hidden);
  Tensor operator()(const Tensor& x) const { return out_(relu(in_(x))); }

 private:
  Linear in_;
  Linear out_;
};

// Scaled dot-product attention over `head_count` heads. The key projection
// carries no bias: it would shift every score of a query equally.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t model_dim,
                     std::size_t head_count);

  // queries [Nq x D], keys/values [Nk x D] -> [Nq x D]. When `weights` is
  // given it receives the attention weights [heads x Nq x Nk].
  Tensor operator()(const Tensor& queries, const Tensor& keys, const Tensor& values,
                    Tensor* weights = nullptr) const;

  std::size_t head_count() const { return heads_; }
  std::size_t model_dim() const { return dim_; }

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  Linear q_;
  Linear k_;
  Linear v_;
  Linear o_;
};

// Pre-normalized self-attention block: x + MHA(LN(x)), then x + FFN(LN(x)).
class EncoderLayer {
 public:
  EncoderLayer(ParameterStore& store, const std::string& name, std::size_t dim,
               std::size_t heads, std::size_t ffn_dim);
  Tensor operator()(const Tensor& tokens) const;

 private:
  LayerNorm norm_attn_;
  MultiHeadAttention attn_;
  LayerNorm norm_ffn_;
  FeedForward ffn_;
};

// Pre-normalized cross-attention block for a small set of queries reading
// from a memory.
class DecoderLayer {
 public:
  DecoderLayer(ParameterStore& store, const std::string& name, std::size_t dim,
               std::size_t heads, std::size_t ffn_dim);
  Tensor operator()(const Tensor& query, const Tensor& memory) const;

 private:
  LayerNorm norm_query_;
  LayerNorm norm_memory_;
  MultiHeadAttention attn_;
  LayerNorm norm_ffn_;
  FeedForward ffn_;
};

Tensor encoder_forward(const Tensor& tokens, const std::vector<EncoderLayer>& layers);
Tensor decoder_forward(const Tensor& query, const Tensor& memory,
                       const std::vector<DecoderLayer>& layers);

// Gated recurrent unit, PyTorch gate convention:
//   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
//   z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
//   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//   h' = (1 - z) * n + z * h,   h_0 = 0
class GruLayer {
 public:
  GruLayer() = default;
  GruLayer(ParameterStore& store, const std::string& name, std::size_t input_dim,
           std::size_t hidden_dim);
  // inputs [T x D] -> hidden states [T x H]. With `reverse` the sequence is
  // consumed back to front; row t of the result still belongs to input t.
  Tensor operator()(const Tensor& inputs, bool reverse = false) const;
  std::size_t hidden_dim() const { return hidden_; }

 private:
  std::size_t hidden_ = 0;
  Linear input_;   // [3H x D]: reset, update, candidate
  Linear hidden_proj_;  // [3H x H]
};

// Forward and reversed passes concatenated per timestep: [T x 2H].
class BiGruLayer {
 public:
  BiGruLayer(ParameterStore& store, const std::string& name, std::size_t input_dim,
             std::size_t hidden_dim);
  Tensor operator()(const Tensor& inputs) const;

 private:
  GruLayer forward_;
  GruLayer backward_;
};

enum class PositionalKind { Learned, Sinusoidal };

// One embedding per cell of an H x W grid, flattened row-major: [HW x D].
class PositionalEmbedding2D {
 public:
  PositionalEmbedding2D() = default;
  PositionalEmbedding2D(ParameterStore& store, const std::string& name, std::size_t height,
                        std::size_t width, std::size_t dim, PositionalKind kind);
  const Tensor& table() const { return table_; }

 private:
  Tensor table_;
};

}  // namespace deformer::nn
