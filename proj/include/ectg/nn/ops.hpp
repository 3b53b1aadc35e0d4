#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ectg/nn/tensor.hpp"

namespace ectg {
class Rng;
}

namespace ectg::nn {

// Every op checks shapes and throws ShapeError naming the op on mismatch.
// Broadcasting exists only along the leading (row) dimension: a 1 x n
// operand is repeated over the rows of an m x n operand in add().

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
/// Multiplies every entry of `a` by the 1 x 1 tensor `s`.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
/// Multiplies row i of `a` (m x n) by `col` entry i (m x 1).
Tensor scale_rows(const Tensor& a, const Tensor& col);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
/// Repeats a 1 x n row `times` times.
Tensor repeat_rows(const Tensor& row, std::size_t times);

/// Gathers rows of `table` (V x d) by id.
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
/// Gathers single entries (row, col) into a k x 1 column.
Tensor gather(const Tensor& a, const std::vector<std::pair<std::size_t, std::size_t>>& at);

/// Softmax along `axis` (1 = within each row, 0 = within each column).
Tensor softmax(const Tensor& a, int axis = 1);
Tensor log_softmax(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);

/// Row-wise layer normalisation with learned gain and bias (1 x n each).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Inverted dropout; identity when `train` is false or p == 0.
Tensor dropout(const Tensor& x, double p, bool train, Rng& rng);
/// Mean over rows of -log softmax(logits)[row, target[row]].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);
/// Replaces entries where mask is true. `mask` is row-major, same size as `a`.
Tensor masked_fill(const Tensor& a, const std::vector<bool>& mask, double value);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

}  // namespace ectg::nn
