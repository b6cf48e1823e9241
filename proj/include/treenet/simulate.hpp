#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treenet/types.hpp"

namespace treenet {

// Synthetic benchmark generators: random graphs, graph-faithful covariances,
// heterogeneous covariates and Poisson log-normal counts. Everything is
// deterministic given its seed.

enum class GraphStructure { kErdos, kScaleFree, kCluster };

GraphStructure parse_structure(const std::string& name);
std::string structure_name(GraphStructure s);

struct SimulationSpec {
  GraphStructure structure = GraphStructure::kErdos;
  int p = 20;
  int n = 100;
  double density = 0.15;  // erdos / cluster target density
  double ratio = 3.0;     // cluster intra/inter connection probability ratio
  int n_groups = 3;
  double edge_magnitude = 0.3;  // signed precision entry per edge
  double diag_boost = 0.1;      // diagonal dominance margin
  uint64_t seed = 0;
};

/// Random graph of the requested structure. Scale-free graphs come from
/// single-attachment preferential attachment and are spanning trees; cluster
/// graphs use equal blocks with within/between probabilities chosen to hit
/// the requested overall density at the requested ratio.
IntMatrix gen_graph(const SimulationSpec& spec);

/// Correlation matrix whose inverse has the support of g: precision
/// K + (|lambda_min(K)| + u) I with K_jk = +-v on edges (random signs),
/// inverted and rescaled to unit diagonal.
Matrix graph_to_covariance(const IntMatrix& g, double v, double u,
                           uint64_t seed,
                           std::vector<std::string>* warnings = nullptr);

/// Heterogeneous design: intercept, one standard normal, one ordinal in
/// {1,2,3}, one 3-level categorical as two reference-cell indicators (d = 5).
Matrix gen_covariates(int n, uint64_t seed);

/// Counts from the Poisson log-normal layer: Z_i ~ N(0, sigma_g),
/// Y_ij ~ Poisson(exp(x_i' theta_j + o_ij + Z_ij)).
IntMatrix simulate_counts(const Matrix& sigma_g, const Matrix& x,
                          const Matrix& theta, const Matrix& o, uint64_t seed);

/// Benchmark coefficient draw: intercept row 1, others uniform(-0.5, 1).
Matrix benchmark_theta(int d, int p, uint64_t seed);

}  // namespace treenet
