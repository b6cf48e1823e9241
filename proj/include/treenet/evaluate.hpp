#pragma once

#include <optional>

#include "treenet/types.hpp"

namespace treenet {

// Scoring of inferred networks against a known truth, plus descriptive
// centrality. All graphs are symmetric 0/1 adjacencies with zero diagonal;
// metrics run over unordered pairs.

int edge_count(const IntMatrix& g);

/// False discovery rate: false positives / inferred edges.
/// Throws ValidationError when the inferred network is empty (callers report
/// such runs through the empty-network rate instead).
double fdr(const IntMatrix& inferred, const IntMatrix& truth);

/// |edges(inferred)| / |edges(truth)|. Throws when the truth is empty.
double density_ratio(const IntMatrix& inferred, const IntMatrix& truth);

/// Mann-Whitney AUC of the scores against the truth: probability a random
/// true edge outranks a random non-edge, ties counted 1/2. Throws when the
/// truth has no edge or no non-edge.
double auc(const Matrix& scores, const IntMatrix& truth);

/// Unnormalized shortest-path betweenness (Brandes accumulation) on the
/// unweighted graph; disconnected pairs contribute nothing.
Vector betweenness(const IntMatrix& g);

struct EvalReport {
  std::optional<double> fdr;            // absent iff inferred empty
  double density_ratio = 0.0;
  std::optional<double> auc;            // absent iff truth degenerate
  int n_true_edges = 0;
  int n_inferred_edges = 0;
  bool empty = false;
};

EvalReport evaluate_network(const IntMatrix& inferred, const Matrix& scores,
                            const IntMatrix& truth);

}  // namespace treenet
