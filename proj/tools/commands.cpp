#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "loris/distributed.hpp"
#include "loris/error.hpp"
#include "loris/io.hpp"
#include "loris/link.hpp"
#include "loris/model.hpp"
#include "loris/solver.hpp"

namespace loris::cli {

namespace fs = std::filesystem;

namespace {

std::string out_path(const RunConfig& cfg, const std::string& name) {
  fs::create_directories(cfg.out);
  return (fs::path(cfg.out) / name).string();
}

void require(const std::string& value, const char* what) {
  if (value.empty()) throw Error(ErrorKind::kInvalidArgument, std::string("missing --") + what);
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInvalidArgument, "cannot open " + path);
  return in;
}

template <class Write>
void write_to(const std::string& path, Write&& write) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kInvalidArgument, "cannot write " + path);
  write(out);
}

std::vector<Cell> target_cells(const RunConfig& cfg, const DataFrame& data) {
  if (cfg.targets.empty()) return data.missing_cells();
  auto in = open_in(cfg.targets);
  std::vector<Cell> cells = read_cells_csv(in, cfg.targets);
  for (const Cell& c : cells) {
    if (c.i < 0 || c.i >= data.rows() || c.j < 0 || c.j >= data.cols()) {
      throw Error(ErrorKind::kDimensionMismatch, cfg.targets + ": cell (" + std::to_string(c.i) + "," +
                                                     std::to_string(c.j) + ") outside the data frame");
    }
  }
  return cells;
}

SolverConfig solver_config(const RunConfig& cfg, const Penalties& pen) {
  SolverConfig s = cfg.solver;
  s.pen = pen;
  if (cfg.reproducible) s.record_time = false;
  return s;
}

void log_penalties(std::ostream& log, const RunConfig& cfg, const Penalties& pen) {
  log << "lambda_S = " << format_double(pen.lambda_S) << (cfg.lambda_S ? "" : " (auto)") << '\n';
  log << "lambda_L = " << format_double(pen.lambda_L) << (cfg.lambda_L ? "" : " (auto)") << '\n';
}

DataFrame with_links(const DataFrame& data, const std::vector<LinkKind>& links) {
  return DataFrame(data.rows(), data.cols(), links, data.entries(), data.labels());
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int cmd_fit(const RunConfig& cfg, std::ostream& log) {
  require(cfg.data, "data");
  require(cfg.dict, "dict");
  DataFrame data = read_data_csv(cfg.data);
  Dictionary dict = read_dictionary(cfg.dict);
  const Penalties pen = cfg.penalties(data, dict);
  std::vector<Cell> extra = target_cells(cfg, data);
  const Problem problem(std::move(data), std::move(dict), std::move(extra));
  const SolverConfig solver = solver_config(cfg, pen);

  FitResult fit;
  if (cfg.workers > 1) {
    const Partition part = partition_omega(problem, cfg.workers, cfg.partition, cfg.solver.seed);
    DistributedFit dist = distributed_mcgd_fit(problem, solver, part);
    write_to(out_path(cfg, "roundlog.csv"), [&](std::ostream& os) { dist.log.write_csv(os); });
    fit = std::move(dist.fit);
  } else {
    fit = mcgd_fit(problem, solver);
  }

  write_to(out_path(cfg, "params.csv"), [&](std::ostream& os) { write_alpha_csv(os, fit.params.alpha); });
  write_to(out_path(cfg, "theta.csv"), [&](std::ostream& os) { write_theta_csv(os, fit.params); });
  write_to(out_path(cfg, "trace.csv"), [&](std::ostream& os) { write_trace_csv(os, fit.trace); });
  const OptimalityReport report =
      optimality_report(problem, fit.params, pen, {solver.svd_delta, solver.svd_max_iters, solver.seed});
  write_to(out_path(cfg, "optimality.txt"), [&](std::ostream& os) {
    log_penalties(os, cfg, pen);
    os << "converged = " << (fit.converged ? "true" : "false") << '\n';
    os << "iterations = " << fit.iterations << '\n';
    os << "objective = " << format_double(fit.final_objective) << '\n';
    os << "alpha_update = " << alpha_update_name(fit.alpha_update_used) << '\n';
    os << report.to_string();
  });

  log_penalties(log, cfg, pen);
  log << "iterations = " << fit.iterations << ", objective = " << format_double(fit.final_objective)
      << (fit.converged ? ", converged" : ", iteration budget exhausted") << '\n';
  return fit.converged ? kExitOk : kExitBudget;
}

int cmd_impute(const RunConfig& cfg, std::ostream& log) {
  require(cfg.data, "data");
  require(cfg.dict, "dict");
  require(cfg.params, "params");
  const DataFrame data = read_data_csv(cfg.data);
  const Dictionary dict = read_dictionary(cfg.dict);
  if (dict.rows() != data.rows() || dict.cols() != data.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "dictionary shape does not match the data frame");
  }
  ModelParams params;
  {
    const std::string path = (fs::path(cfg.params) / "params.csv").string();
    auto in = open_in(path);
    params.alpha = read_alpha_csv(in, path);
  }
  {
    const std::string path = (fs::path(cfg.params) / "theta.csv").string();
    auto in = open_in(path);
    read_theta_csv(in, params, path);
  }
  if (params.alpha.size() != dict.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "params.csv has " + std::to_string(params.alpha.size()) +
                                                   " coefficients, the dictionary has " + std::to_string(dict.size()));
  }
  for (const Cell& c : params.xi) {
    if (c.i >= data.rows() || c.j >= data.cols()) {
      throw Error(ErrorKind::kDimensionMismatch, "theta.csv cell (" + std::to_string(c.i) + "," + std::to_string(c.j) +
                                                     ") outside the data frame");
    }
  }

  const std::vector<Cell> cells = target_cells(cfg, data);
  write_to(out_path(cfg, "imputed.csv"), [&](std::ostream& os) {
    os << "i,j,link,mean,label\n";
    for (const Cell& c : cells) {
      const LinkKind& link = data.link(c.j);
      const double mean = g_grad(link, linear_predictor(dict, params, c));
      os << c.i << ',' << c.j << ',' << link_name(link) << ',' << format_double(mean) << ',';
      if (link.family() == LinkFamily::kBernoulli) os << (mean > 0.5 ? 1 : 0);
      os << '\n';
    }
  });
  log << "imputed " << cells.size() << " cells\n";
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg, std::ostream& log) {
  const SynthSpec& spec = cfg.synth;
  spec.validate();
  const Dictionary dict = gen_dictionary(spec);
  const ModelParams truth = gen_truth(spec, dict);
  const SynthData data = gen_observations(spec, dict, truth);

  write_to(out_path(cfg, "data.csv"), [&](std::ostream& os) { write_data_csv(os, data.observed); });
  write_to(out_path(cfg, "dict.txt"), [&](std::ostream& os) { write_dictionary(os, dict); });
  write_to(out_path(cfg, "truth_alpha.csv"), [&](std::ostream& os) { write_alpha_csv(os, truth.alpha); });
  write_to(out_path(cfg, "truth_theta.csv"), [&](std::ostream& os) { write_theta_csv(os, truth); });
  write_to(out_path(cfg, "heldout.csv"), [&](std::ostream& os) {
    os << "i,j,y\n";
    for (const Observation& o : data.held_out) os << o.i << ',' << o.j << ',' << format_double(o.y) << '\n';
  });
  log << spec.n << "x" << spec.p << " frame, q = " << dict.size() << ", " << data.observed.entries().size()
      << " observed, " << data.held_out.size() << " held out\n";
  return kExitOk;
}

std::uint64_t replicate_seed(std::uint64_t seed, int r) { return iteration_seed(seed ^ 0x6a09e667f3bcc909ULL, r); }

std::vector<BenchRow> bench_replicate(const RunConfig& cfg, BenchSize size, int replicate) {
  SynthSpec spec = cfg.synth;
  spec.n = size.n;
  spec.p = size.p;
  spec.seed = replicate_seed(cfg.synth.seed, replicate);
  spec.validate();
  const Dictionary dict = gen_dictionary(spec);
  const ModelParams truth = gen_truth(spec, dict);
  const SynthData data = gen_observations(spec, dict, truth);
  const std::vector<Cell> missing = data.observed.missing_cells();

  bool mixed = false;
  for (const LinkKind& link : data.observed.links()) mixed |= link.family() != LinkFamily::kGaussian;
  const std::vector<LinkKind> gaussian(static_cast<std::size_t>(spec.p), LinkKind::gaussian());
  const DataFrame as_gaussian = with_links(data.observed, gaussian);

  std::vector<BenchRow> rows;
  auto add = [&](const std::string& method, const ModelParams& est, const std::vector<LinkKind>& mean_links,
                 double ms, int iterations) {
    BenchRow row;
    row.size = size;
    row.replicate = replicate;
    row.method = method;
    row.time_ms = cfg.reproducible ? 0.0 : ms;
    row.iterations = iterations;
    row.errors = error_metrics(truth, est, dict, data.observed, data.held_out, mean_links);
    rows.push_back(row);
  };
  auto loris = [&](const std::string& method, const DataFrame& frame) {
    const Penalties pen = cfg.penalties(frame, dict);
    SolverConfig solver = solver_config(cfg, pen);
    solver.seed = spec.seed;
    solver.record_time = false;
    const auto start = std::chrono::steady_clock::now();
    const Problem problem(frame, dict, missing);
    const FitResult fit = mcgd_fit(problem, solver);
    add(method, fit.params, frame.links(), elapsed_ms(start), fit.iterations);
  };

  loris("loris", data.observed);
  if (mixed) loris("loris_gaussian", as_gaussian);
  {
    const Penalties pen = cfg.penalties(as_gaussian, dict);
    const auto start = std::chrono::steady_clock::now();
    const BaselineResult base = two_step_baseline_detailed(as_gaussian, dict, pen.lambda_L);
    add("two_step", base.params, gaussian, elapsed_ms(start), base.iterations);
  }
  return rows;
}

std::vector<BenchRow> run_bench(const RunConfig& cfg) {
  std::vector<BenchSize> sizes = cfg.sizes;
  if (sizes.empty()) sizes.push_back({cfg.synth.n, cfg.synth.p});
  std::vector<BenchRow> rows;
  for (const BenchSize& size : sizes) {
    for (int r = 0; r < cfg.replicates; ++r) {
      std::vector<BenchRow> rep = bench_replicate(cfg, size, r);
      rows.insert(rows.end(), rep.begin(), rep.end());
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "size,replicate,method,time_ms,iterations,theta_err,alpha_err,gaussian_mse,poisson_mse,bernoulli_err\n";
  for (const BenchRow& r : rows) {
    out << r.size.n << 'x' << r.size.p << ',' << r.replicate << ',' << r.method << ',' << format_double(r.time_ms)
        << ',' << r.iterations << ',' << format_double(r.errors.theta_sq_error) << ','
        << format_double(r.errors.alpha_sq_error) << ',' << format_double(r.errors.gaussian_mse) << ','
        << format_double(r.errors.poisson_mse) << ',' << format_double(r.errors.bernoulli_error) << '\n';
  }
}

int cmd_bench(const RunConfig& cfg, std::ostream& log) {
  const std::vector<BenchRow> rows = run_bench(cfg);
  write_to(out_path(cfg, "bench.csv"), [&](std::ostream& os) { write_bench_csv(os, rows); });
  log << rows.size() << " result rows\n";
  return kExitOk;
}

int cmd_validate(const RunConfig& cfg, std::ostream& log) {
  require(cfg.data, "data");
  require(cfg.dict, "dict");
  const DataFrame data = read_data_csv(cfg.data);
  const Dictionary dict = read_dictionary(cfg.dict);
  std::optional<ModelParams> truth;
  if (!cfg.truth.empty()) {
    truth.emplace();
    const std::string a = (fs::path(cfg.truth) / "truth_alpha.csv").string();
    const std::string t = (fs::path(cfg.truth) / "truth_theta.csv").string();
    auto ain = open_in(a);
    truth->alpha = read_alpha_csv(ain, a);
    auto tin = open_in(t);
    read_theta_csv(tin, *truth, t);
  }
  const AssumptionReport report = validate_assumptions(data, dict, truth ? &*truth : nullptr, cfg.a_box);
  log << report.to_string();
  return report.has_failures() ? kExitUserError : kExitOk;
}

int cmd_simulate_distributed(const RunConfig& cfg, std::ostream& log) {
  std::optional<Problem> problem;
  if (!cfg.data.empty() || !cfg.dict.empty()) {
    require(cfg.data, "data");
    require(cfg.dict, "dict");
    DataFrame data = read_data_csv(cfg.data);
    std::vector<Cell> extra = target_cells(cfg, data);
    problem.emplace(std::move(data), read_dictionary(cfg.dict), std::move(extra));
  } else {
    cfg.synth.validate();
    const Dictionary dict = gen_dictionary(cfg.synth);
    const SynthData data = gen_observations(cfg.synth, dict, gen_truth(cfg.synth, dict));
    problem.emplace(data.observed, dict, data.observed.missing_cells());
  }
  const Penalties pen = cfg.penalties(problem->data(), problem->dictionary());
  SolverConfig solver = solver_config(cfg, pen);
  solver.record_time = false;

  const FitResult central = mcgd_fit(*problem, solver);
  const Partition part = partition_omega(*problem, cfg.workers, cfg.partition, cfg.solver.seed);
  const DistributedFit dist = distributed_mcgd_fit(*problem, solver, part);

  double max_dF = 0.0;
  const std::size_t common = std::min(central.trace.size(), dist.fit.trace.size());
  for (std::size_t t = 0; t < common; ++t) {
    max_dF = std::max(max_dF, std::abs(central.trace[t].F - dist.fit.trace[t].F));
  }
  auto rel_diff = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    return (a - b).norm() / std::max(1.0, a.norm());
  };
  const double d_alpha = rel_diff(central.params.alpha, dist.fit.params.alpha);
  const double d_theta = rel_diff(central.params.theta, dist.fit.params.theta);
  const std::size_t np = static_cast<std::size_t>(problem->rows()) * static_cast<std::size_t>(problem->cols());
  const std::size_t largest = dist.log.max_message_doubles();
  std::size_t up = 0;
  std::size_t down = 0;
  for (const Message& m : dist.log.messages) (m.up ? up : down) += m.bytes();

  write_to(out_path(cfg, "roundlog.csv"), [&](std::ostream& os) { dist.log.write_csv(os); });
  write_to(out_path(cfg, "trace.csv"), [&](std::ostream& os) { write_trace_csv(os, dist.fit.trace); });
  std::ostringstream summary;
  summary << "workers = " << cfg.workers << '\n'
          << "partition = " << partition_strategy_name(cfg.partition) << '\n'
          << "iterations_central = " << central.iterations << '\n'
          << "iterations_distributed = " << dist.fit.iterations << '\n'
          << "max_abs_F_difference = " << format_double(max_dF) << '\n'
          << "alpha_rel_difference = " << format_double(d_alpha) << '\n'
          << "theta_rel_difference = " << format_double(d_theta) << '\n'
          << "messages = " << dist.log.message_count() << '\n'
          << "bytes_up = " << up << '\n'
          << "bytes_down = " << down << '\n'
          << "largest_message_doubles = " << largest << '\n'
          << "matrix_entries = " << np << '\n';
  write_to(out_path(cfg, "summary.txt"), [&](std::ostream& os) { os << summary.str(); });
  log << summary.str();
  const bool same = central.iterations == dist.fit.iterations && max_dF <= 1e-10 * (1.0 + std::abs(central.final_objective));
  if (!same) log << "distributed trajectory differs from the centralized one\n";
  if (largest >= np) log << "a message carried n*p values\n";
  return same && largest < np ? kExitOk : kExitMismatch;
}

}  // namespace loris::cli
