#pragma once

// Test-only oracles, independent of the library code paths they check.

#include <cmath>
#include <random>
#include <vector>

#include "treenet/types.hpp"

namespace oracles {

// Exact marginal log-likelihood of a single Poisson log-normal observation:
// log int Poisson(y; exp(mu + z)) N(z; 0, sigma2) dz, by Simpson quadrature
// around the (unique) mode of the concave log-integrand.
inline double pln_loglik_1d(double y, double mu, double sigma2) {
  const auto logf = [&](double z) {
    return y * (mu + z) - std::exp(mu + z) - std::lgamma(y + 1.0) -
           0.5 * z * z / sigma2 - 0.5 * std::log(2.0 * M_PI * sigma2);
  };
  // Newton for the mode: f'(z) = y - exp(mu+z) - z/sigma2.
  double z = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double ez = std::exp(mu + z);
    const double g = y - ez - z / sigma2;
    const double h = -ez - 1.0 / sigma2;
    const double step = g / h;
    z -= step;
    if (std::abs(step) < 1e-13) break;
  }
  const double curvature = std::exp(mu + z) + 1.0 / sigma2;
  const double radius = 20.0 / std::sqrt(curvature);
  const int intervals = 8000;  // even
  const double h = 2.0 * radius / intervals;
  const double shift = logf(z);
  double acc = std::exp(logf(z - radius) - shift) +
               std::exp(logf(z + radius) - shift);
  for (int i = 1; i < intervals; ++i) {
    const double w = (i % 2 == 1) ? 4.0 : 2.0;
    acc += w * std::exp(logf(z - radius + i * h) - shift);
  }
  return shift + std::log(acc * h / 3.0);
}

// Exact log-likelihood of an intercept-only p=1 PLN sample.
inline double pln_loglik_1d_total(const treenet::IntMatrix& y, double theta,
                                  const treenet::Matrix& o, double sigma2) {
  double acc = 0.0;
  for (treenet::Index i = 0; i < y.rows(); ++i)
    acc += pln_loglik_1d(y(i, 0), theta + o(i, 0), sigma2);
  return acc;
}

// Brute-force betweenness by enumerating all shortest paths (BFS per pair).
inline std::vector<double> betweenness_bruteforce(const treenet::IntMatrix& g) {
  const int p = static_cast<int>(g.rows());
  std::vector<double> score(static_cast<size_t>(p), 0.0);
  // count shortest paths from s to t passing through v, for all s < t
  for (int s = 0; s < p; ++s) {
    for (int t = s + 1; t < p; ++t) {
      // BFS distances from both ends, then count via DP.
      auto bfs = [&](int src) {
        std::vector<int> dist(static_cast<size_t>(p), -1);
        std::vector<double> cnt(static_cast<size_t>(p), 0.0);
        std::vector<int> queue{src};
        dist[static_cast<size_t>(src)] = 0;
        cnt[static_cast<size_t>(src)] = 1.0;
        for (size_t qi = 0; qi < queue.size(); ++qi) {
          const int u = queue[qi];
          for (int v = 0; v < p; ++v) {
            if (!g(u, v)) continue;
            if (dist[static_cast<size_t>(v)] < 0) {
              dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
              queue.push_back(v);
            }
            if (dist[static_cast<size_t>(v)] ==
                dist[static_cast<size_t>(u)] + 1)
              cnt[static_cast<size_t>(v)] += cnt[static_cast<size_t>(u)];
          }
        }
        return std::make_pair(dist, cnt);
      };
      const auto [ds, cs] = bfs(s);
      const auto [dt, ct] = bfs(t);
      if (ds[static_cast<size_t>(t)] < 0) continue;  // disconnected pair
      const int dst = ds[static_cast<size_t>(t)];
      const double total = cs[static_cast<size_t>(t)];
      for (int v = 0; v < p; ++v) {
        if (v == s || v == t) continue;
        if (ds[static_cast<size_t>(v)] < 0 || dt[static_cast<size_t>(v)] < 0)
          continue;
        if (ds[static_cast<size_t>(v)] + dt[static_cast<size_t>(v)] == dst)
          score[static_cast<size_t>(v)] +=
              cs[static_cast<size_t>(v)] * ct[static_cast<size_t>(v)] / total;
      }
    }
  }
  return score;
}

}  // namespace oracles
