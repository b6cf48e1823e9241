#pragma once

#include <vector>

#include "treenet/pln.hpp"
#include "treenet/types.hpp"

namespace treenet {

// EM over the latent spanning-tree layer. The per-edge data evidence is
// psi_jk = (1 - rho_jk^2)^(-n/2); the E step averages over all spanning
// trees of beta .* psi via the tree-algebra kernel, the M step updates
// beta_jk = P_jk / m_jk(beta) with a log-space backtracking safeguard so the
// recorded objective never decreases.

struct PsiMatrix {
  Matrix log_psi;  // p x p symmetric, zero diagonal, entries >= 0
  int n_samples = 0;
};

/// log psi_jk = -(n/2) log(1 - rho_jk^2) from clamped correlations.
PsiMatrix psi_matrix(const MomentEstimates& moments, int n);

/// Expected complete log-likelihood of the tree layer, up to beta-free
/// constants: sum_{j<k} p_jk (log beta_jk + log psi_jk) - log B(beta),
/// where B is the spanning-tree sum of beta.
double expected_loglik(const Matrix& beta, const PsiMatrix& psi,
                       const Matrix& p_mat);

struct TreeEmConfig {
  int max_iter = 100;
  double tol = 1e-4;        // max-abs change in p_mat between E steps
  double beta_min = 1e-12;  // keeps the support connected
  Matrix initial_beta;      // empty -> uniform
};

struct TreeEmState {
  Matrix beta;   // geometric-mean-1 gauge, strictly positive off-diagonal
  Matrix p_mat;  // edge posterior probabilities
  std::vector<double> objective_trace;  // one value per EM iteration
  int iterations = 0;
  bool converged = false;
};

TreeEmState fit_tree_em(const PsiMatrix& psi, const TreeEmConfig& config = {});

struct InferredNetwork {
  IntMatrix adjacency;  // scores > threshold
  Matrix scores;
  double threshold = 0.0;
};

InferredNetwork threshold_scores(const Matrix& scores, double threshold);

struct PipelineConfig {
  PlnConfig pln;
  TreeEmConfig em;
  double threshold = -1.0;  // < 0 means the spanning-tree density 2/p
};

struct NetworkResult {
  PlnFit pln;
  MomentEstimates moments;
  TreeEmState em;
  InferredNetwork network;
};

/// Full pipeline: PLN fit, conditional moments, psi, tree EM, thresholding.
/// Stage failures are rethrown with the stage name in the message.
NetworkResult infer_network(const IntMatrix& y, const Matrix& x,
                            const Matrix& o, const PipelineConfig& config = {});

}  // namespace treenet
