#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "treenet/io.hpp"

namespace {

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("TREENET_OUT")) return env;
  return ".";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse species-interaction network inference from count data"};
  app.require_subcommand(1);

  treenet::RunConfig cfg;
  cfg.out_dir = default_out_dir();
  std::string offset_mode = "zero";
  std::string use_list;
  std::string structure = "erdos";
  double density = -1.0;

  auto add_io_options = [&](CLI::App* cmd, bool with_covariates) {
    cmd->add_option("--counts", cfg.counts_path, "count matrix CSV")
        ->required();
    if (with_covariates) {
      cmd->add_option("--covariates", cfg.covariates_path, "covariate CSV");
      cmd->add_option("--use", use_list,
                      "comma-separated covariates to include");
      cmd->add_option("--offsets", cfg.offsets_path, "offset matrix CSV");
      cmd->add_option("--offset-mode", offset_mode,
                      "zero | provided | log-row-total | log-column-total");
      cmd->add_flag("!--keep-zero-species", cfg.drop_zero_species,
                    "keep all-zero species columns instead of dropping them");
    }
    cmd->add_option("--threshold", cfg.threshold,
                    "edge probability threshold (default 2/p)");
    cmd->add_option("--seed", cfg.seed, "random seed");
    cmd->add_option("--out", cfg.out_dir, "output directory");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit the network on full data");
  add_io_options(fit, true);

  CLI::App* resample =
      app.add_subcommand("resample", "stability selection over subsamples");
  add_io_options(resample, true);
  resample->add_option("--subsamples", cfg.subsamples, "number of subsamples");
  resample->add_option("--fraction", cfg.fraction, "subsample row fraction");
  resample->add_option("--freq-threshold", cfg.freq_threshold,
                       "selection frequency threshold f'");
  resample->add_option("--threads", cfg.threads, "parallel replicate workers");

  CLI::App* simulate =
      app.add_subcommand("simulate", "generate a synthetic benchmark dataset");
  simulate->add_option("--structure", structure, "erdos | scalefree | cluster");
  simulate->add_option("--p", cfg.sim.p, "number of species");
  simulate->add_option("--n", cfg.sim.n, "number of sites");
  simulate->add_option("--density", density, "edge density (erdos/cluster)");
  simulate->add_option("--ratio", cfg.sim.ratio,
                       "cluster intra/inter probability ratio");
  simulate->add_option("--groups", cfg.sim.n_groups, "cluster group count");
  simulate->add_option("--seed", cfg.seed, "random seed");
  simulate->add_option("--out", cfg.out_dir, "output directory");

  CLI::App* eval =
      app.add_subcommand("eval", "score an inferred network against a truth");
  eval->add_option("--scores", cfg.scores_path, "edge score matrix CSV")
      ->required();
  eval->add_option("--truth", cfg.truth_path, "true adjacency CSV")->required();
  eval->add_option("--threshold", cfg.threshold,
                   "score threshold (default 2/p)");
  eval->add_option("--out", cfg.out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!use_list.empty()) {
      std::string item;
      std::stringstream ss(use_list);
      while (std::getline(ss, item, ',')) cfg.use_covariates.push_back(item);
    }
    cfg.offset_mode = treenet::parse_offset_mode(offset_mode);

    if (app.got_subcommand(fit)) {
      treenet::run_fit(cfg);
    } else if (app.got_subcommand(resample)) {
      treenet::run_resample(cfg);
    } else if (app.got_subcommand(simulate)) {
      cfg.sim.structure = treenet::parse_structure(structure);
      cfg.sim.seed = cfg.seed;
      if (density > 0.0) cfg.sim.density = density;
      treenet::run_simulate(cfg);
    } else if (app.got_subcommand(eval)) {
      treenet::run_eval(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
