#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treenet/tree_em.hpp"
#include "treenet/types.hpp"

namespace treenet {

// Stability-selection wrapper: refits the whole pipeline on row subsamples
// and aggregates per-edge selection frequencies. Each replicate draws its
// rows from an independent stream derived from (seed, replicate), so the
// result does not depend on how replicates are scheduled.

struct ResampleConfig {
  int subsamples = 100;
  double fraction = 0.8;        // rows kept per replicate, without replacement
  uint64_t seed = 0;
  double freq_threshold = 0.9;  // f' applied by threshold_frequencies
  int threads = 1;
  bool keep_replicates = false;
  PipelineConfig pipeline;
};

struct ReplicateFailure {
  int replicate = 0;
  std::string message;
};

struct SelectionFrequencies {
  Matrix freq;  // fraction of successful replicates selecting each edge
  int n_success = 0;
  std::vector<ReplicateFailure> failures;
  std::vector<IntMatrix> replicate_edges;  // kept when keep_replicates
};

/// Runs the pipeline on `subsamples` row subsets; an edge counts as selected
/// in a replicate when its posterior probability exceeds the pipeline
/// threshold (2/p by default). Replicates that fail are excluded from the
/// denominator and reported; more than 20% failures is an error.
SelectionFrequencies stability_selection(const IntMatrix& y, const Matrix& x,
                                         const Matrix& o,
                                         const ResampleConfig& cfg);

/// Thresholds selection frequencies at f' (strictly greater).
InferredNetwork threshold_frequencies(const SelectionFrequencies& freq,
                                      double f_prime);

struct ThresholdCurvePoint {
  double threshold;
  int n_edges;
};

/// Selected-edge count swept over thresholds 0, 0.01, ..., 1.
std::vector<ThresholdCurvePoint> threshold_curve(const Matrix& scores);

}  // namespace treenet
