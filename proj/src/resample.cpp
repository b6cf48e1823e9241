#include "treenet/resample.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "treenet/rng.hpp"

namespace treenet {

namespace {

// Distinct row indices for one replicate, drawn by partial Fisher-Yates from
// the replicate's own stream, then sorted to keep site order stable.
std::vector<Index> draw_rows(Index n, Index k, uint64_t seed, int replicate) {
  Rng rng(split_seed(seed, 0x72657030ULL + static_cast<uint64_t>(replicate)));
  std::vector<Index> idx(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (Index i = 0; i < k; ++i) {
    const Index rest = n - i;
    const Index pick = i + static_cast<Index>(rng.uniform() *
                                              static_cast<double>(rest));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(pick)]);
  }
  idx.resize(static_cast<size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct ReplicateOutcome {
  bool ok = false;
  IntMatrix edges;
  std::string error;
};

}  // namespace

SelectionFrequencies stability_selection(const IntMatrix& y, const Matrix& x,
                                         const Matrix& o,
                                         const ResampleConfig& cfg) {
  const Index n = y.rows(), p = y.cols();
  if (cfg.subsamples < 1) throw ValidationError("need at least one subsample");
  if (!(cfg.fraction > 0.0 && cfg.fraction <= 1.0))
    throw ValidationError("subsample fraction must lie in (0,1]");
  const Index k = static_cast<Index>(std::floor(cfg.fraction *
                                                static_cast<double>(n)));
  if (k < x.cols() + 1 || k < 3)
    throw ValidationError("subsample size " + std::to_string(k) +
                          " is too small for the design");

  std::vector<ReplicateOutcome> outcomes(static_cast<size_t>(cfg.subsamples));
  std::atomic<int> next{0};

  auto run_replicate = [&](int r) {
    ReplicateOutcome& out = outcomes[static_cast<size_t>(r)];
    try {
      const std::vector<Index> rows = draw_rows(n, k, cfg.seed, r);
      IntMatrix ys(k, p);
      Matrix xs(k, x.cols()), os(k, p);
      for (Index i = 0; i < k; ++i) {
        ys.row(i) = y.row(rows[static_cast<size_t>(i)]);
        xs.row(i) = x.row(rows[static_cast<size_t>(i)]);
        os.row(i) = o.row(rows[static_cast<size_t>(i)]);
      }
      const NetworkResult result = infer_network(ys, xs, os, cfg.pipeline);
      out.edges = result.network.adjacency;
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  };

  if (cfg.threads <= 1) {
    for (int r = 0; r < cfg.subsamples; ++r) run_replicate(r);
  } else {
    auto worker = [&] {
      for (int r = next.fetch_add(1); r < cfg.subsamples;
           r = next.fetch_add(1)) {
        run_replicate(r);
      }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min(cfg.threads, cfg.subsamples);
    pool.reserve(static_cast<size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Deterministic reduction in replicate order.
  SelectionFrequencies out;
  Matrix counts = Matrix::Zero(p, p);
  for (int r = 0; r < cfg.subsamples; ++r) {
    const ReplicateOutcome& oc = outcomes[static_cast<size_t>(r)];
    if (!oc.ok) {
      out.failures.push_back({r, oc.error});
      continue;
    }
    counts += oc.edges.cast<double>();
    ++out.n_success;
    if (cfg.keep_replicates) out.replicate_edges.push_back(oc.edges);
  }
  if (out.failures.size() * 5 > static_cast<size_t>(cfg.subsamples)) {
    std::string msg = "more than 20% of replicates failed:";
    for (const auto& f : out.failures)
      msg += "\n  replicate " + std::to_string(f.replicate) + ": " + f.message;
    throw NumericError(msg);
  }
  out.freq = counts / static_cast<double>(out.n_success);
  return out;
}

InferredNetwork threshold_frequencies(const SelectionFrequencies& freq,
                                      double f_prime) {
  return threshold_scores(freq.freq, f_prime);
}

std::vector<ThresholdCurvePoint> threshold_curve(const Matrix& scores) {
  std::vector<ThresholdCurvePoint> curve;
  curve.reserve(101);
  for (int step = 0; step <= 100; ++step) {
    const double t = static_cast<double>(step) / 100.0;
    int count = 0;
    for (Index j = 0; j < scores.rows(); ++j)
      for (Index k = j + 1; k < scores.cols(); ++k)
        if (scores(j, k) > t) ++count;
    curve.push_back({t, count});
  }
  return curve;
}

}  // namespace treenet
