#pragma once

#include <utility>
#include <vector>

#include "treenet/types.hpp"

namespace treenet {

// Exact algebra over weighted spanning trees. A weight matrix is a p x p
// symmetric nonnegative matrix with zero diagonal (p >= 3); the graph of its
// strictly positive entries must be connected for the tree sum to exist.
// Everything downstream of the Laplacian minor runs on a rescaled copy of the
// weights and carries the removed scale in log form, so wide dynamic ranges
// do not overflow the factorization.

/// Throws ValidationError unless w is a valid weight matrix.
void validate_weight_matrix(const Matrix& w);

/// Weighted graph Laplacian: q_jj = sum_u w_ju, q_jk = -w_jk.
Matrix laplacian(const Matrix& w);

/// log of W = sum over spanning trees of the product of edge weights,
/// computed as the log-determinant of the (p,p) Laplacian minor through a
/// Cholesky factorization (log accumulated pivot by pivot).
/// Throws NoSpanningTreeError when the positive-weight graph is disconnected.
double log_tree_weight_sum(const Matrix& w);

struct SpanningTree {
  std::vector<std::pair<int, int>> edges;  // pairs with first < second
  double weight;                           // product of edge weights
};

/// All p^(p-2) labeled spanning trees with their weight products, decoded
/// from Prufer sequences. Enumeration oracle; guarded to p <= 8.
std::vector<SpanningTree> enumerate_spanning_trees(const Matrix& w);

/// Derivative matrix m of the tree sum: dW/dw_jk = m_jk * W.
/// m_jk = [(Q^pp)^-1]_jj + [(Q^pp)^-1]_kk - 2 [(Q^pp)^-1]_jk for j < k < p,
/// m_jp = [(Q^pp)^-1]_jj, zero diagonal. Evaluated as a sum of squares of
/// triangular-solve columns, which is the same quantity without the
/// cancellation of the three-term form.
Matrix meila_matrix(const Matrix& w);

/// Conditional probability that each edge belongs to a spanning tree drawn
/// with probability proportional to its weight product: P = w .* m.
/// Off-diagonal entries of the result sum to p-1 over unordered pairs.
Matrix edge_probabilities(const Matrix& w);

struct NormalizedWeights {
  Matrix w;          // rescaled weights
  double log_scale;  // log of the factor removed: input = w * exp(log_scale)
};

/// Divides by the geometric mean of the strictly positive off-diagonal
/// entries. Entries that fall below 1e-16 after rescaling are set to exact
/// zero (structurally absent edge). Throws on an all-zero matrix.
NormalizedWeights normalize_weights(const Matrix& w);

/// Same, but from log-domain weights: log_w entries are logarithms of the
/// weights, -inf marking structural zeros. Safe when the raw weights would
/// overflow double before rescaling.
NormalizedWeights normalize_log_weights(const Matrix& log_w);

}  // namespace treenet
