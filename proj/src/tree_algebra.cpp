#include "treenet/tree_algebra.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace treenet {

namespace {

constexpr double kZeroWeightFloor = 1e-16;  // post-rescale structural-zero cutoff
constexpr double kMaxLogWeight = 600.0;     // keep exp(.) and row sums clear of overflow

// The per-pair elimination kernel is O(p^5) overall but has no subtractions,
// so edge marginals keep componentwise relative accuracy for arbitrarily wide
// weight spreads. The O(p^3) Cholesky-column kernel takes over for larger
// problems whenever the spread is modest enough for it to be trustworthy.
constexpr Index kExactPairLimit = 48;
constexpr double kFastPathLogSpread = 40.0;

void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// Connectivity of the strictly positive support, DFS from node 0.
bool positive_support_connected(const Matrix& w) {
  const Index p = w.rows();
  std::vector<char> seen(static_cast<size_t>(p), 0);
  std::vector<Index> stack{0};
  seen[0] = 1;
  Index reached = 1;
  while (!stack.empty()) {
    const Index u = stack.back();
    stack.pop_back();
    for (Index v = 0; v < p; ++v) {
      if (!seen[static_cast<size_t>(v)] && w(u, v) > 0.0) {
        seen[static_cast<size_t>(v)] = 1;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  return reached == p;
}

[[noreturn]] void throw_disconnected() {
  throw NoSpanningTreeError(
      "no spanning tree: positive-weight graph is disconnected");
}

// Grounded view of the weighted graph: node p-1 is the ground, s holds each
// remaining node's edge to it, wg the edges among the others. Eliminating a
// node is the star-mesh transform; every update is a sum or product of
// nonnegative numbers, so no cancellation occurs anywhere in the pivots.
struct GroundedNetwork {
  Matrix wg;  // (p-1) x (p-1)
  Vector s;   // (p-1)

  explicit GroundedNetwork(const Matrix& w) {
    const Index m = w.rows() - 1;
    wg = w.topLeftCorner(m, m);
    s = w.topRightCorner(m, 1);
  }
};

// Eliminates every node, accumulating log pivots = log det of the (p,p)
// Laplacian minor. Ratios are formed before products to keep all
// intermediates below the weight cap.
double log_det_minor(GroundedNetwork net) {
  const Index m = net.s.size();
  double log_det = 0.0;
  for (Index t = 0; t < m; ++t) {
    double d = net.s(t);
    for (Index u = t + 1; u < m; ++u) d += net.wg(t, u);
    if (!(d > 0.0) || !std::isfinite(d)) throw_disconnected();
    log_det += std::log(d);
    const double inv_d = 1.0 / d;
    for (Index u = t + 1; u < m; ++u) {
      const double r = net.wg(t, u) * inv_d;  // <= 1
      if (r == 0.0) continue;
      net.s(u) += r * net.s(t);
      for (Index v = u + 1; v < m; ++v) net.wg(u, v) += r * net.wg(t, v);
    }
  }
  return log_det;
}

// Eliminates every node except `keep_j` (and `keep_k` when >= 0), returning
// the reduced ground weights and, for a kept pair, the reduced direct edge.
struct ReducedPair {
  double s_j;
  double s_k;
  double w_jk;
};

ReducedPair eliminate_except(const GroundedNetwork& base, Index keep_j,
                             Index keep_k) {
  const Index m = base.s.size();
  Matrix wg = base.wg;  // full symmetric working copy
  Vector s = base.s;
  std::vector<char> dead(static_cast<size_t>(m), 0);

  for (Index t = 0; t < m; ++t) {
    if (t == keep_j || t == keep_k) continue;
    double d = s(t);
    for (Index u = 0; u < m; ++u)
      if (!dead[static_cast<size_t>(u)] && u != t) d += wg(t, u);
    if (!(d > 0.0) || !std::isfinite(d)) throw_disconnected();
    const double inv_d = 1.0 / d;
    dead[static_cast<size_t>(t)] = 1;
    for (Index u = 0; u < m; ++u) {
      if (dead[static_cast<size_t>(u)]) continue;
      const double r = wg(t, u) * inv_d;  // <= 1
      if (r == 0.0) continue;
      s(u) += r * s(t);
      for (Index v = u + 1; v < m; ++v) {
        if (dead[static_cast<size_t>(v)]) continue;
        const double add = r * wg(t, v);
        wg(u, v) += add;
        wg(v, u) = wg(u, v);
      }
    }
  }

  ReducedPair out{};
  out.s_j = s(keep_j);
  out.s_k = keep_k >= 0 ? s(keep_k) : 0.0;
  out.w_jk = keep_k >= 0 ? wg(keep_j, keep_k) : 0.0;
  return out;
}

// Exact all-pairs edge derivative matrix via per-pair network reduction.
// For j < k < p-1 the grounded quadratic form reduces to
// (s_j + s_k) / (s_j s_k + w_jk (s_j + s_k)); for k = p-1 it is 1 / s_j.
Matrix meila_exact(const Matrix& w) {
  const Index p = w.rows();
  const GroundedNetwork base(w);
  Matrix m = Matrix::Zero(p, p);
  for (Index j = 0; j + 1 < p; ++j) {
    for (Index k = j + 1; k + 1 < p; ++k) {
      const ReducedPair red = eliminate_except(base, j, k);
      const double num = red.s_j + red.s_k;
      const double den = red.s_j * red.s_k + red.w_jk * num;
      if (!(den > 0.0) || !std::isfinite(den)) throw_disconnected();
      m(j, k) = num / den;
      m(k, j) = m(j, k);
    }
    const ReducedPair red = eliminate_except(base, j, -1);
    if (!(red.s_j > 0.0) || !std::isfinite(red.s_j)) throw_disconnected();
    m(j, p - 1) = 1.0 / red.s_j;
    m(p - 1, j) = m(j, p - 1);
  }
  return m;
}

// Fast path: columns of the inverse Cholesky factor of the minor; the
// Lemma-2 entries are squared distances between those columns.
Matrix meila_cholesky(const Matrix& w) {
  const Index p = w.rows();
  Matrix q = -w;
  q.diagonal() = w.rowwise().sum();
  Eigen::LLT<Matrix> llt(q.topLeftCorner(p - 1, p - 1));
  if (llt.info() != Eigen::Success) {
    throw NoSpanningTreeError(
        "no spanning tree: Laplacian minor is not positive definite");
  }
  const Matrix r = llt.matrixL().solve(Matrix::Identity(p - 1, p - 1));
  Matrix m = Matrix::Zero(p, p);
  for (Index j = 0; j + 1 < p; ++j) {
    for (Index k = j + 1; k + 1 < p; ++k) {
      m(j, k) = (r.col(j) - r.col(k)).squaredNorm();
      m(k, j) = m(j, k);
    }
    m(j, p - 1) = r.col(j).squaredNorm();
    m(p - 1, j) = m(j, p - 1);
  }
  return m;
}

double log_spread(const Matrix& w) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (Index j = 0; j < w.rows(); ++j) {
    for (Index k = j + 1; k < w.cols(); ++k) {
      if (w(j, k) <= 0.0) continue;
      lo = std::min(lo, w(j, k));
      hi = std::max(hi, w(j, k));
    }
  }
  return hi > 0.0 ? std::log(hi / lo) : 0.0;
}

// Normalized weights + the Lemma-2 matrix of the normalized copy.
Matrix meila_of_normalized(const Matrix& wn) {
  if (!positive_support_connected(wn)) throw_disconnected();
  if (wn.rows() <= kExactPairLimit || log_spread(wn) > kFastPathLogSpread) {
    return meila_exact(wn);
  }
  return meila_cholesky(wn);
}

}  // namespace

void validate_weight_matrix(const Matrix& w) {
  require(w.rows() == w.cols(), "weight matrix must be square");
  require(w.rows() >= 3, "weight matrix needs p >= 3");
  const Index p = w.rows();
  for (Index j = 0; j < p; ++j) {
    require(w(j, j) == 0.0, "weight matrix diagonal must be zero (row " +
                                std::to_string(j) + ")");
    for (Index k = 0; k < p; ++k) {
      const double v = w(j, k);
      require(std::isfinite(v), "weight matrix has a non-finite entry at (" +
                                    std::to_string(j) + "," +
                                    std::to_string(k) + ")");
      require(v >= 0.0, "weight matrix has a negative entry at (" +
                            std::to_string(j) + "," + std::to_string(k) + ")");
      require(v == w(k, j), "weight matrix is not symmetric at (" +
                                std::to_string(j) + "," + std::to_string(k) +
                                ")");
    }
  }
}

Matrix laplacian(const Matrix& w) {
  validate_weight_matrix(w);
  Matrix q = -w;
  q.diagonal() = w.rowwise().sum();
  return q;
}

NormalizedWeights normalize_log_weights(const Matrix& log_w) {
  const Index p = log_w.rows();
  require(p == log_w.cols() && p >= 3,
          "log-weight matrix must be square, p >= 3");
  double sum = 0.0;
  Index count = 0;
  for (Index j = 0; j < p; ++j) {
    for (Index k = j + 1; k < p; ++k) {
      const double lw = log_w(j, k);
      require(lw == log_w(k, j), "log-weight matrix is not symmetric");
      require(!(lw > 0.0) || std::isfinite(lw), "log-weight entry is +inf/nan");
      if (lw != -std::numeric_limits<double>::infinity()) {
        sum += lw;
        ++count;
      }
    }
  }
  if (count == 0) throw ValidationError("all edge weights are zero");
  double shift = sum / static_cast<double>(count);
  // Geometric-mean centering can still leave entries beyond the exp range
  // when the spread itself is extreme; push the whole matrix further down
  // (pure gauge change, tree marginals are scale invariant).
  double max_centered = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < p; ++j)
    for (Index k = j + 1; k < p; ++k)
      if (std::isfinite(log_w(j, k)))
        max_centered = std::max(max_centered, log_w(j, k) - shift);
  if (max_centered > kMaxLogWeight) shift += max_centered - kMaxLogWeight;

  NormalizedWeights out;
  out.log_scale = shift;
  out.w = Matrix::Zero(p, p);
  for (Index j = 0; j < p; ++j) {
    for (Index k = j + 1; k < p; ++k) {
      if (!std::isfinite(log_w(j, k))) continue;
      double v = std::exp(log_w(j, k) - shift);
      if (v < kZeroWeightFloor) v = 0.0;
      out.w(j, k) = v;
      out.w(k, j) = v;
    }
  }
  return out;
}

NormalizedWeights normalize_weights(const Matrix& w) {
  validate_weight_matrix(w);
  const Index p = w.rows();
  Matrix log_w =
      Matrix::Constant(p, p, -std::numeric_limits<double>::infinity());
  for (Index j = 0; j < p; ++j)
    for (Index k = 0; k < p; ++k)
      if (j != k && w(j, k) > 0.0) log_w(j, k) = std::log(w(j, k));
  NormalizedWeights out = normalize_log_weights(log_w);
  if (out.log_scale == 0.0) out.w = w;  // exact fixed point
  return out;
}

double log_tree_weight_sum(const Matrix& w) {
  NormalizedWeights nw = normalize_weights(w);
  if (!positive_support_connected(nw.w)) throw_disconnected();
  const double log_det = log_det_minor(GroundedNetwork(nw.w));
  return log_det + static_cast<double>(w.rows() - 1) * nw.log_scale;
}

Matrix meila_matrix(const Matrix& w) {
  NormalizedWeights nw = normalize_weights(w);
  Matrix m = meila_of_normalized(nw.w);
  // m scales as 1/w: undo the normalization.
  if (nw.log_scale != 0.0) m *= std::exp(-nw.log_scale);
  return m;
}

Matrix edge_probabilities(const Matrix& w) {
  NormalizedWeights nw = normalize_weights(w);
  const Matrix m = meila_of_normalized(nw.w);
  return nw.w.cwiseProduct(m);  // scale of w and 1/w cancels exactly
}

std::vector<SpanningTree> enumerate_spanning_trees(const Matrix& w) {
  validate_weight_matrix(w);
  const int p = static_cast<int>(w.rows());
  if (p > 8) {
    throw ValidationError("spanning-tree enumeration is limited to p <= 8 (" +
                          std::to_string(p) + " requested)");
  }
  std::vector<SpanningTree> trees;
  std::vector<int> seq(static_cast<size_t>(p - 2), 0);
  std::vector<int> degree(static_cast<size_t>(p));
  while (true) {
    // Decode the Prufer sequence.
    std::fill(degree.begin(), degree.end(), 1);
    for (int v : seq) degree[static_cast<size_t>(v)]++;
    SpanningTree tree;
    tree.weight = 1.0;
    std::vector<int> deg = degree;
    for (int s : seq) {
      int leaf = -1;
      for (int u = 0; u < p; ++u) {
        if (deg[static_cast<size_t>(u)] == 1) {
          leaf = u;
          break;
        }
      }
      tree.edges.emplace_back(std::min(leaf, s), std::max(leaf, s));
      deg[static_cast<size_t>(leaf)]--;
      deg[static_cast<size_t>(s)]--;
    }
    int a = -1, b = -1;
    for (int u = 0; u < p; ++u) {
      if (deg[static_cast<size_t>(u)] == 1) (a < 0 ? a : b) = u;
    }
    tree.edges.emplace_back(a, b);
    for (const auto& [j, k] : tree.edges) tree.weight *= w(j, k);
    trees.push_back(std::move(tree));

    // Next sequence (odometer).
    int pos = static_cast<int>(seq.size()) - 1;
    while (pos >= 0 && seq[static_cast<size_t>(pos)] == p - 1) {
      seq[static_cast<size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    seq[static_cast<size_t>(pos)]++;
  }
  return trees;
}

}  // namespace treenet
