#include "treenet/evaluate.hpp"

#include <vector>

namespace treenet {

namespace {

void check_adjacency(const IntMatrix& g, const char* what) {
  if (g.rows() != g.cols())
    throw ValidationError(std::string(what) + " adjacency must be square");
  for (Index j = 0; j < g.rows(); ++j) {
    if (g(j, j) != 0)
      throw ValidationError(std::string(what) + " adjacency diagonal must be zero");
    for (Index k = 0; k < g.cols(); ++k) {
      if (g(j, k) != g(k, j))
        throw ValidationError(std::string(what) + " adjacency must be symmetric");
      if (g(j, k) != 0 && g(j, k) != 1)
        throw ValidationError(std::string(what) + " adjacency must be 0/1");
    }
  }
}

void check_same_size(const IntMatrix& a, const IntMatrix& b) {
  if (a.rows() != b.rows())
    throw ValidationError("graphs have different node counts");
}

}  // namespace

int edge_count(const IntMatrix& g) {
  check_adjacency(g, "input");
  return g.sum() / 2;
}

double fdr(const IntMatrix& inferred, const IntMatrix& truth) {
  check_adjacency(inferred, "inferred");
  check_adjacency(truth, "true");
  check_same_size(inferred, truth);
  int fp = 0, tp = 0;
  for (Index j = 0; j < inferred.rows(); ++j) {
    for (Index k = j + 1; k < inferred.cols(); ++k) {
      if (!inferred(j, k)) continue;
      (truth(j, k) ? tp : fp) += 1;
    }
  }
  if (fp + tp == 0)
    throw ValidationError("FDR undefined: inferred network is empty");
  return static_cast<double>(fp) / static_cast<double>(fp + tp);
}

double density_ratio(const IntMatrix& inferred, const IntMatrix& truth) {
  check_adjacency(inferred, "inferred");
  check_adjacency(truth, "true");
  check_same_size(inferred, truth);
  const int true_edges = truth.sum() / 2;
  if (true_edges == 0)
    throw ValidationError("density ratio undefined: true network is empty");
  return static_cast<double>(inferred.sum() / 2) /
         static_cast<double>(true_edges);
}

double auc(const Matrix& scores, const IntMatrix& truth) {
  check_adjacency(truth, "true");
  if (scores.rows() != truth.rows() || scores.cols() != truth.cols())
    throw ValidationError("score matrix shape does not match the truth");
  std::vector<double> pos, neg;
  for (Index j = 0; j < truth.rows(); ++j)
    for (Index k = j + 1; k < truth.cols(); ++k)
      (truth(j, k) ? pos : neg).push_back(scores(j, k));
  if (pos.empty() || neg.empty())
    throw ValidationError("AUC undefined: truth has no edge or no non-edge");
  double wins = 0.0;
  for (double s_pos : pos) {
    for (double s_neg : neg) {
      if (s_pos > s_neg)
        wins += 1.0;
      else if (s_pos == s_neg)
        wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos.size()) *
                 static_cast<double>(neg.size()));
}

Vector betweenness(const IntMatrix& g) {
  check_adjacency(g, "input");
  const Index p = g.rows();
  Vector score = Vector::Zero(p);
  std::vector<Index> queue, order;
  std::vector<int> dist(static_cast<size_t>(p));
  std::vector<double> sigma(static_cast<size_t>(p)), delta(static_cast<size_t>(p));

  for (Index s = 0; s < p; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    queue.assign(1, s);
    order.clear();
    dist[static_cast<size_t>(s)] = 0;
    sigma[static_cast<size_t>(s)] = 1.0;
    for (size_t qi = 0; qi < queue.size(); ++qi) {
      const Index u = queue[qi];
      order.push_back(u);
      for (Index v = 0; v < p; ++v) {
        if (!g(u, v)) continue;
        if (dist[static_cast<size_t>(v)] < 0) {
          dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
          queue.push_back(v);
        }
        if (dist[static_cast<size_t>(v)] == dist[static_cast<size_t>(u)] + 1)
          sigma[static_cast<size_t>(v)] += sigma[static_cast<size_t>(u)];
      }
    }
    // Dependency accumulation in reverse BFS order.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Index w = *it;
      for (Index v = 0; v < p; ++v) {
        if (!g(w, v)) continue;
        if (dist[static_cast<size_t>(v)] == dist[static_cast<size_t>(w)] + 1) {
          delta[static_cast<size_t>(w)] +=
              sigma[static_cast<size_t>(w)] / sigma[static_cast<size_t>(v)] *
              (1.0 + delta[static_cast<size_t>(v)]);
        }
      }
      if (w != s) score(w) += delta[static_cast<size_t>(w)];
    }
  }
  return score / 2.0;  // each unordered pair was counted from both ends
}

EvalReport evaluate_network(const IntMatrix& inferred, const Matrix& scores,
                            const IntMatrix& truth) {
  EvalReport report;
  report.n_true_edges = edge_count(truth);
  report.n_inferred_edges = edge_count(inferred);
  report.empty = report.n_inferred_edges == 0;
  if (!report.empty) report.fdr = fdr(inferred, truth);
  if (report.n_true_edges > 0)
    report.density_ratio = density_ratio(inferred, truth);
  const Index pairs = truth.rows() * (truth.rows() - 1) / 2;
  if (report.n_true_edges > 0 && report.n_true_edges < pairs)
    report.auc = auc(scores, truth);
  return report;
}

}  // namespace treenet
