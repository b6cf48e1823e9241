#include "treenet/simulate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <vector>

#include "treenet/rng.hpp"

namespace treenet {

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

long Rng::poisson(double lambda) {
  if (lambda <= 0.0) return 0;
  if (lambda < 30.0) {
    const double limit = std::exp(-lambda);
    long k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }
  // PTRS transformed rejection (valid for lambda >= 10).
  const double b = 0.931 + 2.53 * std::sqrt(lambda);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_lambda = std::log(lambda);
  while (true) {
    double u = uniform() - 0.5;
    double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<long>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kf * log_lambda - lambda - std::lgamma(kf + 1.0)) {
      return static_cast<long>(kf);
    }
  }
}

GraphStructure parse_structure(const std::string& name) {
  if (name == "erdos") return GraphStructure::kErdos;
  if (name == "scalefree") return GraphStructure::kScaleFree;
  if (name == "cluster") return GraphStructure::kCluster;
  throw ValidationError("unknown graph structure '" + name +
                        "' (expected erdos, scalefree or cluster)");
}

std::string structure_name(GraphStructure s) {
  switch (s) {
    case GraphStructure::kErdos: return "erdos";
    case GraphStructure::kScaleFree: return "scalefree";
    case GraphStructure::kCluster: return "cluster";
  }
  return "?";
}

namespace {

void check_spec(const SimulationSpec& spec) {
  if (spec.p < 3) throw ValidationError("graph needs p >= 3");
  if (spec.structure != GraphStructure::kScaleFree &&
      !(spec.density > 0.0 && spec.density < 1.0))
    throw ValidationError("density must lie in (0,1)");
  if (spec.structure == GraphStructure::kCluster) {
    if (!(spec.ratio >= 1.0))
      throw ValidationError("cluster ratio must be >= 1");
    if (spec.n_groups < 2 || spec.n_groups > spec.p)
      throw ValidationError("cluster group count must be in [2, p]");
  }
}

IntMatrix erdos_graph(int p, double density, Rng& rng) {
  IntMatrix g = IntMatrix::Zero(p, p);
  for (int j = 0; j < p; ++j)
    for (int k = j + 1; k < p; ++k)
      if (rng.uniform() < density) g(j, k) = g(k, j) = 1;
  return g;
}

// Single-attachment preferential attachment: each new node links to one
// existing endpoint drawn degree-proportionally, so the result is a tree.
IntMatrix scale_free_graph(int p, Rng& rng) {
  IntMatrix g = IntMatrix::Zero(p, p);
  std::vector<int> endpoints{0, 1};
  g(0, 1) = g(1, 0) = 1;
  for (int v = 2; v < p; ++v) {
    const size_t pick = static_cast<size_t>(rng.uniform() *
                                            static_cast<double>(endpoints.size()));
    const int target = endpoints[pick];
    g(v, target) = g(target, v) = 1;
    endpoints.push_back(v);
    endpoints.push_back(target);
  }
  return g;
}

IntMatrix cluster_graph(int p, double density, double ratio, int n_groups,
                        Rng& rng) {
  std::vector<int> group(static_cast<size_t>(p));
  // Balanced groups: first p % n_groups blocks take the extra node.
  const int base = p / n_groups, extra = p % n_groups;
  int node = 0;
  for (int gidx = 0; gidx < n_groups; ++gidx) {
    const int size = base + (gidx < extra ? 1 : 0);
    for (int s = 0; s < size; ++s) group[static_cast<size_t>(node++)] = gidx;
  }
  double within_pairs = 0.0, between_pairs = 0.0;
  for (int j = 0; j < p; ++j)
    for (int k = j + 1; k < p; ++k)
      (group[static_cast<size_t>(j)] == group[static_cast<size_t>(k)]
           ? within_pairs
           : between_pairs) += 1.0;
  const double total_pairs = within_pairs + between_pairs;
  const double p_in =
      density * total_pairs / (within_pairs + between_pairs / ratio);
  if (p_in > 1.0) {
    throw ValidationError(
        "infeasible cluster density/ratio: required within-block probability "
        "exceeds 1");
  }
  const double p_out = p_in / ratio;
  IntMatrix g = IntMatrix::Zero(p, p);
  for (int j = 0; j < p; ++j) {
    for (int k = j + 1; k < p; ++k) {
      const double prob =
          group[static_cast<size_t>(j)] == group[static_cast<size_t>(k)]
              ? p_in
              : p_out;
      if (rng.uniform() < prob) g(j, k) = g(k, j) = 1;
    }
  }
  return g;
}

void check_adjacency(const IntMatrix& g) {
  if (g.rows() != g.cols()) throw ValidationError("adjacency must be square");
  for (Index j = 0; j < g.rows(); ++j) {
    if (g(j, j) != 0) throw ValidationError("adjacency diagonal must be zero");
    for (Index k = 0; k < g.cols(); ++k) {
      if (g(j, k) != g(k, j)) throw ValidationError("adjacency must be symmetric");
      if (g(j, k) != 0 && g(j, k) != 1)
        throw ValidationError("adjacency entries must be 0/1");
    }
  }
}

}  // namespace

IntMatrix gen_graph(const SimulationSpec& spec) {
  check_spec(spec);
  Rng rng(split_seed(spec.seed, 0x67726170));  // graph stream
  switch (spec.structure) {
    case GraphStructure::kErdos:
      return erdos_graph(spec.p, spec.density, rng);
    case GraphStructure::kScaleFree:
      return scale_free_graph(spec.p, rng);
    case GraphStructure::kCluster:
      return cluster_graph(spec.p, spec.density, spec.ratio, spec.n_groups,
                           rng);
  }
  throw ValidationError("unreachable structure");
}

Matrix graph_to_covariance(const IntMatrix& g, double v, double u,
                           uint64_t seed, std::vector<std::string>* warnings) {
  check_adjacency(g);
  if (!(v > 0.0) || !(u > 0.0))
    throw ValidationError("edge magnitude and diagonal boost must be positive");
  const Index p = g.rows();
  Rng rng(split_seed(seed, 0x636f7661));  // covariance stream
  Matrix k = Matrix::Zero(p, p);
  for (Index j = 0; j < p; ++j) {
    for (Index l = j + 1; l < p; ++l) {
      if (!g(j, l)) continue;
      const double signed_v = rng.uniform() < 0.5 ? v : -v;
      k(j, l) = signed_v;
      k(l, j) = signed_v;
    }
  }

  double boost = u;
  Matrix sigma;
  for (int attempt = 0;; ++attempt) {
    Matrix omega = k;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
    omega.diagonal().array() += std::abs(eig.eigenvalues().minCoeff()) + boost;
    Eigen::SelfAdjointEigenSolver<Matrix> eig_omega(omega);
    const double lo = eig_omega.eigenvalues().minCoeff();
    const double hi = eig_omega.eigenvalues().maxCoeff();
    if (lo > 1e-10 * hi) {
      sigma = Eigen::LLT<Matrix>(omega).solve(Matrix::Identity(p, p));
      sigma = 0.5 * (sigma + sigma.transpose()).eval();
      break;
    }
    if (attempt >= 8)
      throw NumericError("precision matrix stayed near-singular");
    boost *= 10.0;
    if (warnings)
      warnings->push_back("near-singular precision; diagonal boost raised to " +
                          std::to_string(boost));
  }

  const Vector inv_sd = sigma.diagonal().cwiseSqrt().cwiseInverse();
  sigma = (inv_sd.asDiagonal() * sigma * inv_sd.asDiagonal()).eval();
  return 0.5 * (sigma + sigma.transpose()).eval();
}

Matrix gen_covariates(int n, uint64_t seed) {
  if (n < 2) throw ValidationError("covariate generation needs n >= 2");
  Rng rng(split_seed(seed, 0x636f7661 + 1));  // covariate stream
  Matrix x(n, 5);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = rng.normal();
    x(i, 2) = 1.0 + std::floor(rng.uniform() * 3.0);  // ordinal 1..3
    const int level = static_cast<int>(rng.uniform() * 3.0);
    x(i, 3) = level == 1 ? 1.0 : 0.0;
    x(i, 4) = level == 2 ? 1.0 : 0.0;
  }
  return x;
}

IntMatrix simulate_counts(const Matrix& sigma_g, const Matrix& x,
                          const Matrix& theta, const Matrix& o, uint64_t seed) {
  const Index n = x.rows(), p = sigma_g.rows();
  if (sigma_g.cols() != p) throw ValidationError("covariance must be square");
  if (theta.rows() != x.cols() || theta.cols() != p)
    throw ValidationError("theta shape does not match design/covariance");
  if (o.rows() != n || o.cols() != p)
    throw ValidationError("offset shape does not match design/covariance");
  Eigen::LLT<Matrix> llt(sigma_g);
  if (llt.info() != Eigen::Success)
    throw ValidationError("covariance is not positive definite");
  const Matrix chol = llt.matrixL();
  const Matrix mean_part = x * theta + o;

  Rng rng(split_seed(seed, 0x636f756e));  // count stream
  IntMatrix y(n, p);
  Vector eps(p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) eps(j) = rng.normal();
    const Vector z = chol * eps;
    for (Index j = 0; j < p; ++j) {
      const double eta = mean_part(i, j) + z(j);
      if (eta > 700.0) {
        throw NumericError(
            "simulated log-rate exceeds 700; use smaller theta or offsets");
      }
      const double rate = std::exp(eta);
      if (rate > 1e9) {
        throw NumericError(
            "simulated rate exceeds 1e9; use smaller theta or offsets");
      }
      y(i, j) = static_cast<int>(rng.poisson(rate));
    }
  }
  return y;
}

Matrix benchmark_theta(int d, int p, uint64_t seed) {
  if (d < 1 || p < 1) throw ValidationError("theta needs d >= 1, p >= 1");
  Rng rng(split_seed(seed, 0x74686574));  // theta stream
  Matrix theta(d, p);
  theta.row(0).setOnes();
  for (int r = 1; r < d; ++r)
    for (int c = 0; c < p; ++c) theta(r, c) = -0.5 + 1.5 * rng.uniform();
  return theta;
}

}  // namespace treenet
