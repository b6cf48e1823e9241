#include "treenet/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/QR>

#include <nlohmann/json.hpp>

#include "treenet/evaluate.hpp"

namespace treenet {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct RawTable {
  std::vector<std::string> row_ids;
  std::vector<std::string> col_names;
  std::vector<std::vector<std::string>> cells;
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

RawTable read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  RawTable table;
  std::string line;
  if (!std::getline(in, line))
    throw ValidationError("'" + path.string() + "' is empty");
  auto header = split_line(line);
  if (header.size() < 2)
    throw ValidationError("'" + path.string() + "' needs an id column and at least one data column");
  table.col_names.assign(header.begin() + 1, header.end());
  size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw ValidationError("'" + path.string() + "' row " +
                            std::to_string(row) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
    }
    table.row_ids.push_back(cells[0]);
    table.cells.emplace_back(cells.begin() + 1, cells.end());
  }
  if (table.cells.empty())
    throw ValidationError("'" + path.string() + "' has no data rows");
  return table;
}

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end;
}

bool parse_int(const std::string& s, long& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end;
}

// Collects written files so a failed stage leaves no partial output behind.
class OutputSet {
 public:
  explicit OutputSet(const fs::path& dir) : dir_(dir) {
    fs::create_directories(dir_);
  }
  ~OutputSet() {
    if (!armed_) return;
    for (const auto& f : written_) {
      std::error_code ec;
      fs::remove(f, ec);
    }
  }
  std::ofstream open(const std::string& name) {
    const fs::path p = dir_ / name;
    written_.push_back(p);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + p.string() + "'");
    return out;
  }
  void commit() { armed_ = false; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
  bool armed_ = true;
};

void write_named_matrix(std::ofstream& out, const Matrix& m,
                        const std::vector<std::string>& row_names,
                        const std::vector<std::string>& col_names) {
  out << "id";
  for (const auto& c : col_names) out << ',' << c;
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    out << row_names[static_cast<size_t>(i)];
    for (Index j = 0; j < m.cols(); ++j) out << ',' << format_double(m(i, j));
    out << '\n';
  }
}

std::vector<std::string> default_names(const std::string& prefix, Index n) {
  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i + 1));
  return names;
}

void write_edges_csv(std::ofstream& out, const Matrix& scores,
                     const IntMatrix& adjacency,
                     const std::vector<std::string>& species) {
  out << "node_a,node_b,score,selected\n";
  for (Index j = 0; j < scores.rows(); ++j) {
    for (Index k = j + 1; k < scores.cols(); ++k) {
      out << species[static_cast<size_t>(j)] << ','
          << species[static_cast<size_t>(k)] << ','
          << format_double(scores(j, k)) << ',' << adjacency(j, k) << '\n';
    }
  }
}

void write_dot(std::ofstream& out, const Matrix& scores,
               const IntMatrix& adjacency,
               const std::vector<std::string>& species) {
  out << "graph network {\n  node [shape=ellipse];\n";
  for (const auto& s : species) out << "  \"" << s << "\";\n";
  for (Index j = 0; j < scores.rows(); ++j) {
    for (Index k = j + 1; k < scores.cols(); ++k) {
      if (!adjacency(j, k)) continue;
      out << "  \"" << species[static_cast<size_t>(j)] << "\" -- \""
          << species[static_cast<size_t>(k)] << "\" [penwidth="
          << format_double(0.5 + 5.0 * scores(j, k)) << "];\n";
    }
  }
  out << "}\n";
}

void write_threshold_curve(std::ofstream& out, const Matrix& scores) {
  out << "threshold,n_edges\n";
  for (const auto& pt : threshold_curve(scores))
    out << format_double(pt.threshold) << ',' << pt.n_edges << '\n';
}

struct LoadedInputs {
  CountTable counts;
  DesignResult design;
  Matrix offsets;
  json echo;
};

LoadedInputs load_inputs(const RunConfig& cfg) {
  LoadedInputs in;
  in.counts = load_counts(cfg.counts_path, cfg.drop_zero_species);
  if (in.counts.y.cols() < 3)
    throw ValidationError("need at least 3 species after validation");

  if (cfg.covariates_path.empty()) {
    in.design.x = Matrix::Ones(in.counts.y.rows(), 1);
    in.design.column_names = {"(intercept)"};
  } else {
    const CovariateTable table = load_covariates(cfg.covariates_path);
    if (table.sites.size() != static_cast<size_t>(in.counts.y.rows()))
      throw ValidationError("covariate rows do not match count rows");
    in.design = build_design(table, cfg.use_covariates);
  }

  std::optional<Matrix> provided;
  if (cfg.offset_mode == OffsetMode::kProvided) {
    if (cfg.offsets_path.empty())
      throw ValidationError("offset mode 'provided' needs --offsets");
    provided = load_matrix(cfg.offsets_path);
  }
  in.offsets = compute_offsets(cfg.offset_mode, in.counts.y,
                               provided ? &*provided : nullptr);

  in.echo["counts"] = cfg.counts_path.string();
  in.echo["covariates"] = cfg.covariates_path.string();
  in.echo["offset_mode"] = static_cast<int>(cfg.offset_mode);
  in.echo["use"] = cfg.use_covariates;
  in.echo["design_columns"] = in.design.column_names;
  in.echo["dropped_species"] = in.counts.dropped_species;
  return in;
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start).count();
}

}  // namespace

CountTable load_counts(const fs::path& path, bool drop_zero) {
  const RawTable raw = read_table(path);
  const Index n = static_cast<Index>(raw.cells.size());
  const Index p = static_cast<Index>(raw.col_names.size());
  IntMatrix y(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) {
      const std::string& cell = raw.cells[static_cast<size_t>(i)][static_cast<size_t>(j)];
      long value = 0;
      if (!parse_int(cell, value)) {
        throw ValidationError("count cell is not an integer: row '" +
                              raw.row_ids[static_cast<size_t>(i)] +
                              "', column '" +
                              raw.col_names[static_cast<size_t>(j)] +
                              "' (value '" + cell + "')");
      }
      if (value < 0)
        throw ValidationError("negative count at row '" +
                              raw.row_ids[static_cast<size_t>(i)] +
                              "', column '" +
                              raw.col_names[static_cast<size_t>(j)] + "'");
      y(i, j) = static_cast<int>(value);
    }
  }

  CountTable table;
  table.sites = raw.row_ids;
  if (drop_zero) {
    std::vector<Index> keep;
    for (Index j = 0; j < p; ++j) {
      if (y.col(j).sum() > 0)
        keep.push_back(j);
      else
        table.dropped_species.push_back(raw.col_names[static_cast<size_t>(j)]);
    }
    table.y.resize(n, static_cast<Index>(keep.size()));
    for (size_t j = 0; j < keep.size(); ++j) {
      table.y.col(static_cast<Index>(j)) = y.col(keep[j]);
      table.species.push_back(raw.col_names[static_cast<size_t>(keep[j])]);
    }
  } else {
    table.y = y;
    table.species = raw.col_names;
  }
  return table;
}

CovariateTable load_covariates(const fs::path& path) {
  const RawTable raw = read_table(path);
  CovariateTable table;
  table.sites = raw.row_ids;
  table.names = raw.col_names;
  table.cells = raw.cells;
  return table;
}

OffsetMode parse_offset_mode(const std::string& name) {
  if (name == "zero") return OffsetMode::kZero;
  if (name == "provided") return OffsetMode::kProvided;
  if (name == "log-row-total") return OffsetMode::kLogRowTotal;
  if (name == "log-column-total") return OffsetMode::kLogColumnTotal;
  throw ValidationError("unknown offset mode '" + name + "'");
}

Matrix compute_offsets(OffsetMode mode, const IntMatrix& y,
                       const Matrix* provided) {
  const Index n = y.rows(), p = y.cols();
  switch (mode) {
    case OffsetMode::kZero:
      return Matrix::Zero(n, p);
    case OffsetMode::kProvided: {
      if (!provided) throw ValidationError("offsets not supplied");
      if (provided->rows() != n || provided->cols() != p)
        throw ValidationError("offset matrix shape does not match counts");
      return *provided;
    }
    case OffsetMode::kLogRowTotal: {
      Matrix o(n, p);
      for (Index i = 0; i < n; ++i) {
        const double total = std::max<double>(y.row(i).sum(), 1.0);
        o.row(i).setConstant(std::log(total));
      }
      return o;
    }
    case OffsetMode::kLogColumnTotal: {
      Matrix o(n, p);
      for (Index j = 0; j < p; ++j) {
        const double total = std::max<double>(y.col(j).sum(), 1.0);
        o.col(j).setConstant(std::log(total));
      }
      return o;
    }
  }
  throw ValidationError("unreachable offset mode");
}

DesignResult build_design(const CovariateTable& table,
                          const std::vector<std::string>& selection) {
  const Index n = static_cast<Index>(table.sites.size());
  std::vector<Vector> columns;
  std::vector<std::string> names{"(intercept)"};
  columns.push_back(Vector::Ones(n));

  for (const std::string& want : selection) {
    const auto it = std::find(table.names.begin(), table.names.end(), want);
    if (it == table.names.end())
      throw ValidationError("covariate '" + want + "' not present in header");
    const size_t col = static_cast<size_t>(it - table.names.begin());

    enum class Kind { kNumeric, kOrdinal, kCategorical } kind;
    if (want.size() > 4 && want.rfind("_num") == want.size() - 4)
      kind = Kind::kNumeric;
    else if (want.size() > 4 && want.rfind("_ord") == want.size() - 4)
      kind = Kind::kOrdinal;
    else if (want.size() > 4 && want.rfind("_cat") == want.size() - 4)
      kind = Kind::kCategorical;
    else {
      bool all_numeric = true;
      double tmp;
      for (Index i = 0; i < n; ++i)
        if (!parse_double(table.cells[static_cast<size_t>(i)][col], tmp)) {
          all_numeric = false;
          break;
        }
      kind = all_numeric ? Kind::kNumeric : Kind::kCategorical;
    }

    if (kind == Kind::kNumeric || kind == Kind::kOrdinal) {
      Vector v(n);
      for (Index i = 0; i < n; ++i) {
        double value;
        if (!parse_double(table.cells[static_cast<size_t>(i)][col], value)) {
          if (kind == Kind::kNumeric)
            throw ValidationError("covariate '" + want + "' row '" +
                                  table.sites[static_cast<size_t>(i)] +
                                  "' is not numeric");
          // ordinal with textual levels: map sorted unique levels to 1..L
          std::set<std::string> levels;
          for (Index r = 0; r < n; ++r)
            levels.insert(table.cells[static_cast<size_t>(r)][col]);
          std::map<std::string, double> code;
          double next_code = 1.0;
          for (const auto& lv : levels) code[lv] = next_code++;
          for (Index r = 0; r < n; ++r)
            v(r) = code[table.cells[static_cast<size_t>(r)][col]];
          break;
        }
        v(i) = value;
      }
      columns.push_back(v);
      names.push_back(want);
    } else {
      std::set<std::string> levels;
      for (Index i = 0; i < n; ++i)
        levels.insert(table.cells[static_cast<size_t>(i)][col]);
      if (levels.size() < 2)
        throw ValidationError("categorical covariate '" + want +
                              "' has a single level");
      bool first = true;
      for (const auto& level : levels) {
        if (first) {  // reference cell
          first = false;
          continue;
        }
        Vector v(n);
        for (Index i = 0; i < n; ++i)
          v(i) = table.cells[static_cast<size_t>(i)][col] == level ? 1.0 : 0.0;
        columns.push_back(v);
        names.push_back(want + "=" + level);
      }
    }
  }

  DesignResult out;
  out.x.resize(n, static_cast<Index>(columns.size()));
  for (size_t j = 0; j < columns.size(); ++j)
    out.x.col(static_cast<Index>(j)) = columns[j];
  out.column_names = names;

  Eigen::ColPivHouseholderQR<Matrix> qr(out.x);
  if (qr.rank() < out.x.cols()) {
    const auto perm = qr.colsPermutation().indices();
    std::string aliased;
    for (Index i = qr.rank(); i < out.x.cols(); ++i) {
      if (!aliased.empty()) aliased += ", ";
      aliased += names[static_cast<size_t>(perm(i))];
    }
    throw ValidationError("design is rank deficient; aliased columns: " +
                          aliased);
  }
  return out;
}

Matrix load_matrix(const fs::path& path) {
  const RawTable raw = read_table(path);
  const Index n = static_cast<Index>(raw.cells.size());
  const Index p = static_cast<Index>(raw.col_names.size());
  Matrix m(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) {
      double value;
      if (!parse_double(raw.cells[static_cast<size_t>(i)][static_cast<size_t>(j)], value)) {
        throw ValidationError("non-numeric cell at row '" +
                              raw.row_ids[static_cast<size_t>(i)] +
                              "', column '" +
                              raw.col_names[static_cast<size_t>(j)] + "'");
      }
      m(i, j) = value;
    }
  }
  return m;
}

IntMatrix load_adjacency(const fs::path& path) {
  const Matrix m = load_matrix(path);
  IntMatrix g(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (m(i, j) != 0.0 && m(i, j) != 1.0)
        throw ValidationError("adjacency entries must be 0 or 1");
      g(i, j) = static_cast<int>(m(i, j));
    }
  }
  return g;
}

void run_fit(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const LoadedInputs in = load_inputs(cfg);

  PipelineConfig pipeline;
  pipeline.threshold = cfg.threshold;
  const NetworkResult result =
      infer_network(in.counts.y, in.design.x, in.offsets, pipeline);

  OutputSet out(cfg.out_dir);
  {
    auto f = out.open("edge_probs.csv");
    write_named_matrix(f, result.em.p_mat, in.counts.species, in.counts.species);
  }
  {
    auto f = out.open("edges.csv");
    write_edges_csv(f, result.em.p_mat, result.network.adjacency,
                    in.counts.species);
  }
  {
    auto f = out.open("network.dot");
    write_dot(f, result.em.p_mat, result.network.adjacency, in.counts.species);
  }
  {
    auto f = out.open("threshold_curve.csv");
    write_threshold_curve(f, result.em.p_mat);
  }
  {
    json report;
    report["command"] = "fit";
    report["config"] = in.echo;
    report["seed"] = cfg.seed;
    report["threshold"] = result.network.threshold;
    report["elbo_trace"] = result.pln.elbo_trace;
    report["pln_iterations"] = result.pln.iterations;
    report["pln_converged"] = result.pln.converged;
    report["objective_trace"] = result.em.objective_trace;
    report["em_iterations"] = result.em.iterations;
    report["em_converged"] = result.em.converged;
    report["n_clamped_correlations"] = result.moments.clamped.size();
    report["n_edges"] = edge_count(result.network.adjacency);
    report["wall_time_s"] = elapsed_seconds(start);
    json warnings = json::array();
    for (const auto& s : in.counts.dropped_species)
      warnings.push_back("dropped all-zero species '" + s + "'");
    report["warnings"] = warnings;
    auto f = out.open("report.json");
    f << report.dump(2) << '\n';
  }
  out.commit();
}

void run_resample(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const LoadedInputs in = load_inputs(cfg);

  ResampleConfig rcfg;
  rcfg.subsamples = cfg.subsamples;
  rcfg.fraction = cfg.fraction;
  rcfg.seed = cfg.seed;
  rcfg.freq_threshold = cfg.freq_threshold;
  rcfg.threads = cfg.threads;
  rcfg.pipeline.threshold = cfg.threshold;
  const SelectionFrequencies freq =
      stability_selection(in.counts.y, in.design.x, in.offsets, rcfg);
  const InferredNetwork net = threshold_frequencies(freq, cfg.freq_threshold);

  OutputSet out(cfg.out_dir);
  {
    auto f = out.open("frequencies.csv");
    write_named_matrix(f, freq.freq, in.counts.species, in.counts.species);
  }
  {
    auto f = out.open("edges.csv");
    write_edges_csv(f, freq.freq, net.adjacency, in.counts.species);
  }
  {
    auto f = out.open("network.dot");
    write_dot(f, freq.freq, net.adjacency, in.counts.species);
  }
  {
    auto f = out.open("threshold_curve.csv");
    write_threshold_curve(f, freq.freq);
  }
  {
    json report;
    report["command"] = "resample";
    report["config"] = in.echo;
    report["seed"] = cfg.seed;
    report["subsamples"] = cfg.subsamples;
    report["fraction"] = cfg.fraction;
    report["freq_threshold"] = cfg.freq_threshold;
    report["n_success"] = freq.n_success;
    json failures = json::array();
    for (const auto& fr : freq.failures)
      failures.push_back({{"replicate", fr.replicate}, {"error", fr.message}});
    report["failures"] = failures;
    report["n_edges"] = edge_count(net.adjacency);
    report["wall_time_s"] = elapsed_seconds(start);
    auto f = out.open("report.json");
    f << report.dump(2) << '\n';
  }
  out.commit();
}

void run_simulate(const RunConfig& cfg) {
  const SimulationSpec& spec = cfg.sim;
  const IntMatrix truth = gen_graph(spec);
  std::vector<std::string> warnings;
  const Matrix sigma = graph_to_covariance(truth, spec.edge_magnitude,
                                           spec.diag_boost, spec.seed,
                                           &warnings);
  const Matrix x = gen_covariates(spec.n, spec.seed);
  const Matrix theta = benchmark_theta(static_cast<int>(x.cols()), spec.p,
                                       spec.seed);
  const Matrix offsets = Matrix::Zero(spec.n, spec.p);
  const IntMatrix y = simulate_counts(sigma, x, theta, offsets, spec.seed);

  const auto sites = default_names("s", spec.n);
  const auto species = default_names("sp", spec.p);

  OutputSet out(cfg.out_dir);
  {
    auto f = out.open("counts.csv");
    f << "site";
    for (const auto& s : species) f << ',' << s;
    f << '\n';
    for (Index i = 0; i < y.rows(); ++i) {
      f << sites[static_cast<size_t>(i)];
      for (Index j = 0; j < y.cols(); ++j) f << ',' << y(i, j);
      f << '\n';
    }
  }
  {
    // Raw covariates with typed suffixes; build_design on
    // cont_num,level_ord,group_cat reproduces the generating design.
    auto f = out.open("covariates.csv");
    f << "site,cont_num,level_ord,group_cat\n";
    const char* levels[3] = {"a", "b", "c"};
    for (Index i = 0; i < x.rows(); ++i) {
      const int level = x(i, 3) == 1.0 ? 1 : (x(i, 4) == 1.0 ? 2 : 0);
      f << sites[static_cast<size_t>(i)] << ',' << format_double(x(i, 1))
        << ',' << format_double(x(i, 2)) << ',' << levels[level] << '\n';
    }
  }
  {
    auto f = out.open("truth.csv");
    write_named_matrix(f, truth.cast<double>(), species, species);
  }
  {
    auto f = out.open("theta.csv");
    const std::vector<std::string> rows = {"(intercept)", "cont_num",
                                           "level_ord", "group_cat=b",
                                           "group_cat=c"};
    write_named_matrix(f, theta, rows, species);
  }
  {
    json report;
    report["command"] = "simulate";
    report["structure"] = structure_name(spec.structure);
    report["p"] = spec.p;
    report["n"] = spec.n;
    report["density"] = spec.density;
    report["ratio"] = spec.ratio;
    report["edge_magnitude"] = spec.edge_magnitude;
    report["diag_boost"] = spec.diag_boost;
    report["seed"] = spec.seed;
    report["n_edges"] = edge_count(truth);
    report["warnings"] = warnings;
    auto f = out.open("report.json");
    f << report.dump(2) << '\n';
  }
  out.commit();
}

void run_eval(const RunConfig& cfg) {
  const Matrix scores = load_matrix(cfg.scores_path);
  const IntMatrix truth = load_adjacency(cfg.truth_path);
  if (scores.rows() != truth.rows() || scores.cols() != truth.cols())
    throw ValidationError("score and truth matrices disagree in shape");
  const double threshold = cfg.threshold >= 0.0
                               ? cfg.threshold
                               : 2.0 / static_cast<double>(scores.rows());
  const InferredNetwork net = threshold_scores(scores, threshold);
  const EvalReport report = evaluate_network(net.adjacency, scores, truth);
  const Vector centrality = betweenness(net.adjacency);

  OutputSet out(cfg.out_dir);
  {
    json j;
    j["command"] = "eval";
    j["scores"] = cfg.scores_path.string();
    j["truth"] = cfg.truth_path.string();
    j["threshold"] = threshold;
    j["empty"] = report.empty;
    if (report.fdr) j["fdr"] = *report.fdr;
    j["density_ratio"] = report.density_ratio;
    if (report.auc) j["auc"] = *report.auc;
    j["n_true_edges"] = report.n_true_edges;
    j["n_inferred_edges"] = report.n_inferred_edges;
    std::vector<double> b(centrality.data(), centrality.data() + centrality.size());
    j["betweenness"] = b;
    auto f = out.open("report.json");
    f << j.dump(2) << '\n';
  }
  out.commit();
}

}  // namespace treenet
