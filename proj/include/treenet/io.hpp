#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "treenet/resample.hpp"
#include "treenet/simulate.hpp"
#include "treenet/tree_em.hpp"
#include "treenet/types.hpp"

namespace treenet {

// CSV surface and subcommand orchestration. All tables are comma separated,
// UTF-8, LF line endings, '.' decimal point; the first header cell is
// ignored, the first column holds row ids.

struct CountTable {
  IntMatrix y;
  std::vector<std::string> sites;
  std::vector<std::string> species;
  std::vector<std::string> dropped_species;  // all-zero columns, removed
};

/// Loads counts; non-integer or negative cells and ragged rows are errors
/// naming the offending cell. All-zero species columns are dropped with a
/// warning recorded in `dropped_species` (or kept when drop_zero = false).
CountTable load_counts(const std::filesystem::path& path,
                       bool drop_zero = true);

struct CovariateTable {
  std::vector<std::string> sites;
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> cells;  // [row][column]
};

CovariateTable load_covariates(const std::filesystem::path& path);

struct DesignResult {
  Matrix x;
  std::vector<std::string> column_names;  // manifest; starts at "(intercept)"
};

/// Intercept plus the selected covariates: numeric columns pass through,
/// ordinals are numeric level codes, categoricals expand to reference-cell
/// indicators (first level alphabetically is the reference). Column types
/// come from the header suffix (_num, _ord, _cat); unsuffixed columns are
/// numeric when every cell parses as a number, categorical otherwise.
/// Rank deficiency is an error listing the aliased columns.
DesignResult build_design(const CovariateTable& table,
                          const std::vector<std::string>& selection);

enum class OffsetMode { kZero, kProvided, kLogRowTotal, kLogColumnTotal };

OffsetMode parse_offset_mode(const std::string& name);

/// Offsets per mode; provided offsets are read from `provided`; totals of
/// zero enter as log(1).
Matrix compute_offsets(OffsetMode mode, const IntMatrix& y,
                       const Matrix* provided);

Matrix load_matrix(const std::filesystem::path& path);
IntMatrix load_adjacency(const std::filesystem::path& path);

struct RunConfig {
  std::filesystem::path counts_path;
  std::filesystem::path covariates_path;
  std::filesystem::path offsets_path;
  std::vector<std::string> use_covariates;
  OffsetMode offset_mode = OffsetMode::kZero;
  double threshold = -1.0;  // < 0: 2/p
  int subsamples = 100;
  double fraction = 0.8;
  double freq_threshold = 0.9;
  int threads = 1;
  uint64_t seed = 0;
  bool drop_zero_species = true;
  std::filesystem::path out_dir = ".";
  int verbosity = 1;
  SimulationSpec sim;                 // simulate subcommand
  std::filesystem::path scores_path;  // eval subcommand
  std::filesystem::path truth_path;   // eval subcommand
};

/// Subcommand drivers. Each writes its outputs into cfg.out_dir and throws
/// on failure after removing any partially written files.
void run_fit(const RunConfig& cfg);
void run_resample(const RunConfig& cfg);
void run_simulate(const RunConfig& cfg);
void run_eval(const RunConfig& cfg);

}  // namespace treenet
