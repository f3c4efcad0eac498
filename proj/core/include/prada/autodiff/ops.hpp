#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "prada/autodiff/tape.hpp"

namespace prada::ad {

// Contiguous block of rows in a packed [T x H] activation holding one sequence.
struct Segment {
  std::size_t offset = 0;
  std::size_t length = 0;
};

inline constexpr double kLayerNormEps = 1e-5;

// Dense linear algebra.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
// x[m x n] + bias broadcast over rows; bias has n elements.
Var add_bias(Var x, Var bias);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var sum(Var x);

// Elementwise nonlinearities. gelu uses the tanh approximation.
Var tanh(Var x);
Var gelu(Var x);

// Row-wise normalization with learned gain and shift (each of length cols).
Var layer_norm(Var x, Var gamma, Var beta, double eps = kLayerNormEps);

// Rows of table[V x H] selected by ids; result is [ids.size() x H].
Var embedding_gather(Var table, const std::vector<std::size_t>& ids);

// Multi-head causal self-attention over packed sequences. qkv is [T x 3H]
// with query, key and value blocks side by side; row i of a segment attends to
// rows <= i of the same segment only.
Var causal_attention(Var qkv, const std::vector<Segment>& segments, std::size_t heads);

// Mean of selected rows, one output row per group.
Var mean_pool_rows(Var x, const std::vector<std::vector<std::size_t>>& groups);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(Var x, const std::vector<std::size_t>& rows);

// Copy of x where row placements[i].first is replaced by row
// placements[i].second of bank. Replaced rows pass no gradient to x.
Var overwrite_rows(Var x, Var bank, const std::vector<std::pair<std::size_t, std::size_t>>& placements);

// Gradient reversal: identity forward, negated gradient backward.
Var grad_reverse(Var x);

// Value copy that stops gradient flow.
Var detach(Var x);

// Weighted mean over rows of -log softmax(logits)[target]. Weights are the
// per-row mask entries; at least one must be nonzero.
Var softmax_cross_entropy(Var logits, const std::vector<std::size_t>& targets, const std::vector<double>& mask);

// Non-recording helpers.
Tensor softmax_rows(const Tensor& logits);
void matmul_into(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

}  // namespace prada::ad
