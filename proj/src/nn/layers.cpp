#include "ectg/nn/layers.hpp"

#include <cmath>
#include <limits>

namespace ectg::nn {

Tensor ParameterSet::add(const std::string& name, Tensor t) {
  if (contains(name)) throw Error("duplicate parameter name: " + name);
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParameterSet::xavier(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-limit, limit);
  return add(name, Tensor::from(rows, cols, std::move(v), true));
}

Tensor ParameterSet::constant(const std::string& name, std::size_t rows, std::size_t cols,
                              double v) {
  return add(name, Tensor::from(rows, cols, std::vector<double>(rows * cols, v), true));
}

Tensor ParameterSet::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw Error("unknown parameter: " + name);
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return true;
  }
  return false;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

Tensor apply_dropout(const Tensor& x, const ForwardMode& mode) {
  if (!mode.train || mode.dropout <= 0.0 || mode.rng == nullptr) return x;
  return dropout(x, mode.dropout, true, *mode.rng);
}

Tensor positional_encoding(std::size_t length, std::size_t d) {
  std::vector<double> v(length * d);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(pos) * rate;
      v[pos * d + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor::from(length, d, std::move(v));
}

Linear::Linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out,
               Rng& rng, bool bias) {
  weight_ = params.xavier(prefix + ".weight", in, out, rng);
  if (bias) bias_ = params.constant(prefix + ".bias", 1, out, 0.0);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight_);
  return bias_.defined() ? add(y, bias_) : y;
}

LayerNorm::LayerNorm(ParameterSet& params, const std::string& prefix, std::size_t d) {
  gamma_ = params.constant(prefix + ".gamma", 1, d, 1.0);
  beta_ = params.constant(prefix + ".beta", 1, d, 0.0);
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& params, const std::string& prefix,
                                       std::size_t d, std::size_t heads, Rng& rng)
    : heads_(heads) {
  if (heads == 0 || d % heads != 0) {
    throw Error(prefix + ": d_model " + std::to_string(d) + " not divisible by " +
                std::to_string(heads) + " heads");
  }
  q_ = Linear(params, prefix + ".q", d, d, rng);
  k_ = Linear(params, prefix + ".k", d, d, rng);
  v_ = Linear(params, prefix + ".v", d, d, rng);
  o_ = Linear(params, prefix + ".o", d, d, rng);
}

AttentionResult MultiHeadAttention::operator()(const Tensor& query, const Tensor& memory,
                                               bool causal) const {
  const std::size_t lq = query.rows();
  const std::size_t lk = memory.rows();
  if (causal && lq != lk) {
    throw ShapeError("attention: causal mask needs square scores, got " + std::to_string(lq) +
                     "x" + std::to_string(lk));
  }
  const Tensor q = q_(query);
  const Tensor k = k_(memory);
  const Tensor v = v_(memory);
  const std::size_t dh = q.cols() / heads_;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<bool> mask;
  if (causal) {
    mask.resize(lq * lk);
    for (std::size_t i = 0; i < lq; ++i) {
      for (std::size_t j = 0; j < lk; ++j) mask[i * lk + j] = j > i;
    }
  }

  std::vector<Tensor> outputs;
  Tensor weight_sum;
  for (std::size_t h = 0; h < heads_; ++h) {
    const Tensor qh = slice_cols(q, h * dh, dh);
    const Tensor kh = slice_cols(k, h * dh, dh);
    const Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), scale_factor);
    if (causal) scores = masked_fill(scores, mask, -std::numeric_limits<double>::infinity());
    const Tensor w = softmax(scores, 1);
    outputs.push_back(matmul(w, vh));
    weight_sum = weight_sum.defined() ? add(weight_sum, w) : w;
  }
  return {o_(concat_cols(outputs)), scale(weight_sum, 1.0 / static_cast<double>(heads_))};
}

FeedForward::FeedForward(ParameterSet& params, const std::string& prefix, std::size_t d,
                         std::size_t hidden, Rng& rng) {
  in_ = Linear(params, prefix + ".in", d, hidden, rng);
  out_ = Linear(params, prefix + ".out", hidden, d, rng);
}

Tensor FeedForward::operator()(const Tensor& x, const ForwardMode& mode) const {
  return out_(apply_dropout(relu(in_(x)), mode));
}

TransformerEncoder::TransformerEncoder(ParameterSet& params, const std::string& prefix,
                                       const TransformerShape& shape, Rng& rng) {
  for (std::size_t i = 0; i < shape.layers; ++i) {
    const std::string p = prefix + ".layer" + std::to_string(i);
    Layer layer;
    layer.ln1 = LayerNorm(params, p + ".ln1", shape.d_model);
    layer.attn = MultiHeadAttention(params, p + ".attn", shape.d_model, shape.heads, rng);
    layer.ln2 = LayerNorm(params, p + ".ln2", shape.d_model);
    layer.ff = FeedForward(params, p + ".ff", shape.d_model, shape.ff_mult * shape.d_model, rng);
    layers_.push_back(std::move(layer));
  }
  final_ = LayerNorm(params, prefix + ".final_ln", shape.d_model);
}

Tensor TransformerEncoder::operator()(const Tensor& x, const ForwardMode& mode) const {
  Tensor h = x;
  for (const auto& layer : layers_) {
    const Tensor n1 = layer.ln1(h);
    h = add(h, apply_dropout(layer.attn(n1, n1, false).output, mode));
    h = add(h, apply_dropout(layer.ff(layer.ln2(h), mode), mode));
  }
  return final_(h);
}

TransformerDecoder::TransformerDecoder(ParameterSet& params, const std::string& prefix,
                                       const TransformerShape& shape, Rng& rng) {
  for (std::size_t i = 0; i < shape.layers; ++i) {
    const std::string p = prefix + ".layer" + std::to_string(i);
    Layer layer;
    layer.ln1 = LayerNorm(params, p + ".ln1", shape.d_model);
    layer.self_attn = MultiHeadAttention(params, p + ".self_attn", shape.d_model, shape.heads, rng);
    layer.ln2 = LayerNorm(params, p + ".ln2", shape.d_model);
    layer.cross_attn =
        MultiHeadAttention(params, p + ".cross_attn", shape.d_model, shape.heads, rng);
    layer.ln3 = LayerNorm(params, p + ".ln3", shape.d_model);
    layer.ff = FeedForward(params, p + ".ff", shape.d_model, shape.ff_mult * shape.d_model, rng);
    layers_.push_back(std::move(layer));
  }
  final_ = LayerNorm(params, prefix + ".final_ln", shape.d_model);
}

DecoderResult TransformerDecoder::operator()(const Tensor& x, const Tensor& memory,
                                             const ForwardMode& mode) const {
  DecoderResult result;
  Tensor h = x;
  for (const auto& layer : layers_) {
    const Tensor n1 = layer.ln1(h);
    h = add(h, apply_dropout(layer.self_attn(n1, n1, true).output, mode));
    const AttentionResult cross = layer.cross_attn(layer.ln2(h), memory, false);
    h = add(h, apply_dropout(cross.output, mode));
    h = add(h, apply_dropout(layer.ff(layer.ln3(h), mode), mode));
    result.layer_states.push_back(h);
    result.cross_weights = cross.mean_weights;
  }
  result.output = final_(h);
  return result;
}

GruCell::GruCell(ParameterSet& params, const std::string& prefix, std::size_t input,
                 std::size_t hidden, Rng& rng)
    : hidden_(hidden) {
  w_ih_ = params.xavier(prefix + ".w_ih", input, 3 * hidden, rng);
  w_hh_ = params.xavier(prefix + ".w_hh", hidden, 3 * hidden, rng);
  b_ih_ = params.constant(prefix + ".b_ih", 1, 3 * hidden, 0.0);
  b_hh_ = params.constant(prefix + ".b_hh", 1, 3 * hidden, 0.0);
}

Tensor GruCell::operator()(const Tensor& x, const Tensor& h) const {
  const Tensor gi = add(matmul(x, w_ih_), b_ih_);
  const Tensor gh = add(matmul(h, w_hh_), b_hh_);
  const std::size_t n = hidden_;
  const Tensor r = sigmoid(add(slice_cols(gi, 0, n), slice_cols(gh, 0, n)));
  const Tensor z = sigmoid(add(slice_cols(gi, n, n), slice_cols(gh, n, n)));
  const Tensor cand = tanh(add(slice_cols(gi, 2 * n, n), mul(r, slice_cols(gh, 2 * n, n))));
  return add(cand, mul(z, sub(h, cand)));
}

}  // namespace ectg::nn
