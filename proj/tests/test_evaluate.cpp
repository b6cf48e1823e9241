#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "treenet/evaluate.hpp"

using treenet::auc;
using treenet::betweenness;
using treenet::density_ratio;
using treenet::evaluate_network;
using treenet::fdr;
using treenet::IntMatrix;
using treenet::Matrix;
using treenet::Vector;

namespace {

IntMatrix from_edges(int p, const std::vector<std::pair<int, int>>& edges) {
  IntMatrix g = IntMatrix::Zero(p, p);
  for (const auto& [j, k] : edges) g(j, k) = g(k, j) = 1;
  return g;
}

IntMatrix random_graph(int p, double density, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  IntMatrix g = IntMatrix::Zero(p, p);
  for (int j = 0; j < p; ++j)
    for (int k = j + 1; k < p; ++k)
      if (unif(rng) < density) g(j, k) = g(k, j) = 1;
  return g;
}

}  // namespace

TEST_CASE("false discovery rate") {
  const IntMatrix truth = from_edges(4, {{0, 1}, {1, 2}});
  CHECK(fdr(truth, truth) == 0.0);
  CHECK(fdr(from_edges(4, {{0, 3}, {2, 3}}), truth) == 1.0);
  CHECK(fdr(from_edges(4, {{0, 1}, {0, 2}}), truth) == 0.5);
  CHECK_THROWS_AS(fdr(IntMatrix::Zero(4, 4), truth), treenet::ValidationError);
}

TEST_CASE("density ratio") {
  const IntMatrix truth = from_edges(4, {{0, 1}, {1, 2}});
  CHECK(density_ratio(truth, truth) == 1.0);
  CHECK(density_ratio(IntMatrix::Zero(4, 4), truth) == 0.0);
  SUBCASE("double density") {
    IntMatrix big_truth = random_graph(20, 0.1, 3);
    while (big_truth.sum() / 2 != 19)
      big_truth = random_graph(20, 0.1, static_cast<unsigned>(big_truth.sum()));
    IntMatrix doubled = big_truth;
    int added = 0;
    for (int j = 0; j < 20 && added < 19; ++j)
      for (int k = j + 1; k < 20 && added < 19; ++k)
        if (!doubled(j, k)) {
          doubled(j, k) = doubled(k, j) = 1;
          ++added;
        }
    CHECK(density_ratio(doubled, big_truth) == doctest::Approx(2.0));
  }
  CHECK_THROWS_AS(density_ratio(truth, IntMatrix::Zero(4, 4)),
                  treenet::ValidationError);
}

TEST_CASE("ranking AUC") {
  SUBCASE("perfect ranking") {
    const IntMatrix truth = from_edges(4, {{0, 1}, {2, 3}});
    CHECK(auc(truth.cast<double>(), truth) == 1.0);
  }
  SUBCASE("constant scores give one half") {
    const IntMatrix truth = from_edges(5, {{0, 1}, {1, 2}, {3, 4}});
    CHECK(auc(Matrix::Constant(5, 5, 0.3), truth) == 0.5);
  }
  SUBCASE("tie rule: 7.5 wins out of 9 pairs") {
    // true edges scored {0.9, 0.8, 0.2}, non-edges {0.7, 0.2, 0.1}:
    // 3 + 3 + (0.5 + 1 + 0) = 7.5 comparisons won.
    const IntMatrix truth = from_edges(4, {{0, 1}, {0, 2}, {0, 3}});
    Matrix scores = Matrix::Zero(4, 4);
    auto put = [&](int j, int k, double v) { scores(j, k) = scores(k, j) = v; };
    put(0, 1, 0.9);
    put(0, 2, 0.8);
    put(0, 3, 0.2);
    put(1, 2, 0.7);
    put(1, 3, 0.2);
    put(2, 3, 0.1);
    CHECK(auc(scores, truth) == doctest::Approx(7.5 / 9.0));
  }
  SUBCASE("direct enumeration without ties") {
    const IntMatrix truth = from_edges(4, {{0, 1}, {0, 2}, {0, 3}});
    Matrix scores = Matrix::Zero(4, 4);
    auto put = [&](int j, int k, double v) { scores(j, k) = scores(k, j) = v; };
    put(0, 1, 0.9);
    put(0, 2, 0.8);
    put(0, 3, 0.2);
    put(1, 2, 0.7);
    put(1, 3, 0.1);
    put(2, 3, 0.1);
    CHECK(auc(scores, truth) == doctest::Approx(8.0 / 9.0));
  }
  SUBCASE("invariant under strictly increasing transforms") {
    const IntMatrix truth = random_graph(8, 0.3, 5);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix scores = Matrix::Zero(8, 8);
    for (int j = 0; j < 8; ++j)
      for (int k = j + 1; k < 8; ++k)
        scores(j, k) = scores(k, j) = unif(rng);
    const double base = auc(scores, truth);
    const Matrix warped = (3.0 * scores.array() + 1.0).exp().matrix();
    CHECK(auc(warped, truth) == doctest::Approx(base));
  }
  SUBCASE("degenerate truth rejected") {
    CHECK_THROWS_AS(auc(Matrix::Zero(4, 4), IntMatrix::Zero(4, 4)),
                    treenet::ValidationError);
  }
}

TEST_CASE("betweenness centrality") {
  SUBCASE("star") {
    const int p = 7;
    std::vector<std::pair<int, int>> edges;
    for (int leaf = 1; leaf < p; ++leaf) edges.emplace_back(0, leaf);
    const Vector b = betweenness(from_edges(p, edges));
    CHECK(b(0) == doctest::Approx((p - 1) * (p - 2) / 2.0));
    for (int leaf = 1; leaf < p; ++leaf) CHECK(b(leaf) == 0.0);
  }
  SUBCASE("path of three") {
    const Vector b = betweenness(from_edges(3, {{0, 1}, {1, 2}}));
    CHECK(b(0) == 0.0);
    CHECK(b(1) == doctest::Approx(1.0));
    CHECK(b(2) == 0.0);
  }
  SUBCASE("matches the brute-force oracle") {
    for (unsigned seed : {1u, 2u, 3u, 4u}) {
      const IntMatrix g = random_graph(8, 0.35, seed);
      const Vector fast = betweenness(g);
      const auto slow = oracles::betweenness_bruteforce(g);
      for (int v = 0; v < 8; ++v)
        CHECK(fast(v) == doctest::Approx(slow[static_cast<size_t>(v)]));
    }
  }
  SUBCASE("tree leaves score zero") {
    // chain with a branch: 0-1-2-3, 2-4
    const IntMatrix g = from_edges(5, {{0, 1}, {1, 2}, {2, 3}, {2, 4}});
    const Vector b = betweenness(g);
    CHECK(b(0) == 0.0);
    CHECK(b(3) == 0.0);
    CHECK(b(4) == 0.0);
  }
}

TEST_CASE("metrics are invariant under node relabeling") {
  const IntMatrix truth = random_graph(9, 0.3, 11);
  const IntMatrix inferred = random_graph(9, 0.3, 12);
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix scores = Matrix::Zero(9, 9);
  for (int j = 0; j < 9; ++j)
    for (int k = j + 1; k < 9; ++k) scores(j, k) = scores(k, j) = unif(rng);

  std::vector<int> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  IntMatrix truth_p(9, 9), inferred_p(9, 9);
  Matrix scores_p(9, 9);
  for (int j = 0; j < 9; ++j) {
    for (int k = 0; k < 9; ++k) {
      truth_p(perm[j], perm[k]) = truth(j, k);
      inferred_p(perm[j], perm[k]) = inferred(j, k);
      scores_p(perm[j], perm[k]) = scores(j, k);
    }
  }
  CHECK(fdr(inferred_p, truth_p) == doctest::Approx(fdr(inferred, truth)));
  CHECK(density_ratio(inferred_p, truth_p) ==
        doctest::Approx(density_ratio(inferred, truth)));
  CHECK(auc(scores_p, truth_p) == doctest::Approx(auc(scores, truth)));
  const Vector b = betweenness(truth);
  const Vector bp = betweenness(truth_p);
  for (int v = 0; v < 9; ++v) CHECK(bp(perm[v]) == doctest::Approx(b(v)));
}

TEST_CASE("report flags empty networks instead of faking an FDR") {
  const IntMatrix truth = from_edges(4, {{0, 1}});
  const auto report =
      evaluate_network(IntMatrix::Zero(4, 4), Matrix::Zero(4, 4), truth);
  CHECK(report.empty);
  CHECK(!report.fdr.has_value());
  CHECK(report.density_ratio == 0.0);
  CHECK(report.n_true_edges == 1);

  const auto full = evaluate_network(truth, truth.cast<double>(), truth);
  CHECK(!full.empty);
  CHECK(full.fdr.value() == 0.0);
  CHECK(full.auc.value() == 1.0);
}
