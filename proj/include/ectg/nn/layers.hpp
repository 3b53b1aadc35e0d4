#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "ectg/nn/ops.hpp"
#include "ectg/nn/tensor.hpp"
#include "ectg/rng.hpp"

namespace ectg::nn {

/// Named, ordered collection of trainable tensors.
class ParameterSet {
 public:
  /// Registers a tensor under a unique name; throws on duplicates.
  Tensor add(const std::string& name, Tensor t);
  /// Xavier-uniform matrix of shape rows x cols.
  Tensor xavier(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng);
  Tensor constant(const std::string& name, std::size_t rows, std::size_t cols, double v);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Forward-pass switches shared by all layers.
struct ForwardMode {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

Tensor apply_dropout(const Tensor& x, const ForwardMode& mode);

/// Sinusoidal position table of shape length x d (constant).
Tensor positional_encoding(std::size_t length, std::size_t d);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out,
         Rng& rng, bool bias = true);
  Tensor operator()(const Tensor& x) const;
  const Tensor& weight() const { return weight_; }

 private:
  Tensor weight_;  // in x out
  Tensor bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& params, const std::string& prefix, std::size_t d);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma_, beta_); }

 private:
  Tensor gamma_;
  Tensor beta_;
};

struct AttentionResult {
  Tensor output;           // Lq x d
  Tensor mean_weights;     // Lq x Lk, averaged over heads
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& params, const std::string& prefix, std::size_t d,
                     std::size_t heads, Rng& rng);
  /// `causal` requires a square score matrix and hides keys after each query.
  AttentionResult operator()(const Tensor& query, const Tensor& memory, bool causal) const;

 private:
  std::size_t heads_ = 1;
  Linear q_, k_, v_, o_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterSet& params, const std::string& prefix, std::size_t d, std::size_t hidden,
              Rng& rng);
  Tensor operator()(const Tensor& x, const ForwardMode& mode) const;

 private:
  Linear in_, out_;
};

struct TransformerShape {
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t ff_mult = 4;
  std::size_t layers = 2;
};

/// Pre-norm self-attention encoder with a final layer norm.
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParameterSet& params, const std::string& prefix, const TransformerShape& shape,
                     Rng& rng);
  Tensor operator()(const Tensor& x, const ForwardMode& mode) const;

 private:
  struct Layer {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    FeedForward ff;
  };
  std::vector<Layer> layers_;
  LayerNorm final_;
};

struct DecoderResult {
  Tensor output;                   // final (normed) states, L x d
  std::vector<Tensor> layer_states;  // raw output of every layer
  Tensor cross_weights;            // last layer cross-attention, head-averaged
};

/// Pre-norm causal decoder with cross-attention into a memory.
class TransformerDecoder {
 public:
  TransformerDecoder() = default;
  TransformerDecoder(ParameterSet& params, const std::string& prefix, const TransformerShape& shape,
                     Rng& rng);
  DecoderResult operator()(const Tensor& x, const Tensor& memory, const ForwardMode& mode) const;
  std::size_t depth() const { return layers_.size(); }

 private:
  struct Layer {
    LayerNorm ln1, ln2, ln3;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ff;
  };
  std::vector<Layer> layers_;
  LayerNorm final_;
};

class GruCell {
 public:
  GruCell() = default;
  GruCell(ParameterSet& params, const std::string& prefix, std::size_t input, std::size_t hidden,
          Rng& rng);
  /// x: 1 x input, h: 1 x hidden -> 1 x hidden.
  Tensor operator()(const Tensor& x, const Tensor& h) const;
  std::size_t hidden() const { return hidden_; }

 private:
  std::size_t hidden_ = 0;
  Tensor w_ih_, w_hh_, b_ih_, b_hh_;
};

}  // namespace ectg::nn
