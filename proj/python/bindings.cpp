#include <cmath>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "loris/distributed.hpp"
#include "loris/error.hpp"
#include "loris/io.hpp"
#include "loris/solver.hpp"
#include "loris/svd.hpp"
#include "loris/synth.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace loris;

namespace {

// NaN marks a missing cell.
DataFrame frame_from_matrix(const Eigen::MatrixXd& y, const std::vector<std::string>& links,
                            const std::vector<std::string>& labels) {
  if (static_cast<Eigen::Index>(links.size()) != y.cols())
    throw Error(ErrorKind::kDimensionMismatch, "need one link per column");
  std::vector<LinkKind> kinds;
  for (const auto& name : links) kinds.push_back(parse_link(name));
  std::vector<Observation> obs;
  for (int i = 0; i < y.rows(); ++i)
    for (int j = 0; j < y.cols(); ++j)
      if (!std::isnan(y(i, j))) obs.push_back({i, j, y(i, j)});
  return DataFrame(static_cast<int>(y.rows()), static_cast<int>(y.cols()), std::move(kinds), std::move(obs), labels);
}

Eigen::MatrixXd frame_to_matrix(const DataFrame& df) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(df.rows(), df.cols(), std::nan(""));
  for (const Observation& o : df.entries()) y(o.i, o.j) = o.y;
  return y;
}

std::vector<std::string> link_names(const DataFrame& df) {
  std::vector<std::string> out;
  for (const LinkKind& l : df.links()) out.push_back(link_name(l));
  return out;
}

// Atoms as dense n x p matrices; zeros are dropped.
Dictionary dict_from_dense(const std::vector<Eigen::MatrixXd>& atoms, int rows, int cols) {
  std::vector<std::vector<DictEntry>> out;
  for (const auto& x : atoms) {
    if (x.rows() != rows || x.cols() != cols) throw Error(ErrorKind::kDimensionMismatch, "atom shape differs");
    std::vector<DictEntry>& atom = out.emplace_back();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        if (x(i, j) != 0.0) atom.push_back({{i, j}, x(i, j)});
  }
  return Dictionary(rows, cols, std::move(out));
}

std::vector<Eigen::MatrixXd> dict_to_dense(const Dictionary& d) {
  std::vector<Eigen::MatrixXd> out;
  for (int k = 0; k < d.size(); ++k) {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(d.rows(), d.cols());
    for (const DictEntry& e : d.atom(k)) x(e.cell.i, e.cell.j) = e.value;
    out.push_back(std::move(x));
  }
  return out;
}

struct Fit {
  FitResult result;
  Penalties pen;
  int rows = 0;
  int cols = 0;
  std::optional<RoundLog> log;

  Eigen::MatrixXd theta() const { return dense_theta(result.params, rows, cols); }

  py::dict trace() const {
    const auto& tr = result.trace;
    auto column = [&](auto field) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(tr.size()));
      for (std::size_t t = 0; t < tr.size(); ++t) v[static_cast<Eigen::Index>(t)] = field(tr[t]);
      return v;
    };
    return py::dict("t"_a = column([](const IterRecord& r) { return double(r.t); }),
                    "F"_a = column([](const IterRecord& r) { return r.F; }),
                    "loss"_a = column([](const IterRecord& r) { return r.loss; }),
                    "beta"_a = column([](const IterRecord& r) { return r.beta; }),
                    "R_ub"_a = column([](const IterRecord& r) { return r.R_ub; }),
                    "R"_a = column([](const IterRecord& r) { return r.R; }),
                    "sigma1_grad"_a = column([](const IterRecord& r) { return r.sigma1_grad; }),
                    "C_t"_a = column([](const IterRecord& r) { return r.C_t; }));
  }
};

Fit fit(const DataFrame& df, const Dictionary& dict, double lambda_s, double lambda_l, int max_iters, double tol,
        std::uint64_t seed, int workers, const std::string& alpha_update) {
  const Problem problem(df, dict, df.missing_cells());
  SolverConfig cfg;
  cfg.pen = {lambda_s, lambda_l, 0.0};
  cfg.max_iters = max_iters;
  cfg.tol_rel_obj = tol;
  cfg.seed = seed;
  cfg.alpha_update = parse_alpha_update(alpha_update);
  cfg.record_time = false;
  Fit out;
  out.pen = cfg.pen;
  out.rows = df.rows();
  out.cols = df.cols();
  py::gil_scoped_release release;
  if (workers > 1) {
    DistributedFit d =
        distributed_mcgd_fit(problem, cfg, partition_omega(problem, workers, PartitionStrategy::kRoundRobin));
    out.result = std::move(d.fit);
    out.log = std::move(d.log);
  } else {
    out.result = mcgd_fit(problem, cfg);
  }
  return out;
}

Eigen::MatrixXd impute(const DataFrame& df, const Dictionary& dict, const Eigen::VectorXd& alpha,
                       const Eigen::MatrixXd& theta) {
  if (theta.rows() != df.rows() || theta.cols() != df.cols() || alpha.size() != dict.size())
    throw Error(ErrorKind::kDimensionMismatch, "parameter shapes do not match the frame");
  ModelParams params;
  params.alpha = alpha;
  params.xi = all_cells(df.rows(), df.cols());
  params.theta.resize(static_cast<Eigen::Index>(params.xi.size()));
  for (std::size_t x = 0; x < params.xi.size(); ++x)
    params.theta[static_cast<Eigen::Index>(x)] = theta(params.xi[x].i, params.xi[x].j);
  Eigen::MatrixXd mean(df.rows(), df.cols());
  for (const Cell& c : params.xi) mean(c.i, c.j) = g_grad(df.link(c.j), linear_predictor(dict, params, c));
  return mean;
}

py::dict synth(int n, int p, int group_size, int rank, double sparsity, double alpha_scale, double theta_scale,
               double missing_frac, const std::vector<std::string>& links, std::uint64_t seed) {
  SynthSpec s;
  s.n = n;
  s.p = p;
  s.group_size = group_size;
  s.rank_r = rank;
  s.sparsity_frac = sparsity;
  s.alpha_scale = alpha_scale;
  s.theta_scale = theta_scale;
  s.missing_frac = missing_frac;
  s.links.clear();
  for (const auto& name : links) s.links.push_back(parse_link(name));
  s.seed = seed;
  s.validate();
  Dictionary dict = gen_dictionary(s);
  const ModelParams truth = gen_truth(s, dict);
  SynthData data = gen_observations(s, dict, truth);
  Eigen::MatrixXd held = Eigen::MatrixXd::Constant(n, p, std::nan(""));
  for (const Observation& o : data.held_out) held(o.i, o.j) = o.y;
  return py::dict("frame"_a = std::move(data.observed), "dictionary"_a = std::move(dict), "alpha"_a = truth.alpha,
                  "theta"_a = dense_theta(truth, n, p), "held_out"_a = held);
}

}  // namespace

PYBIND11_MODULE(_loris, m) {
  m.doc() = "Low-rank interaction plus sparse main effects for heterogeneous data frames";
  py::register_exception<Error>(m, "LorisError", PyExc_ValueError);

  py::class_<DataFrame>(m, "DataFrame")
      .def(py::init(&frame_from_matrix), "y"_a, "links"_a, "labels"_a = std::vector<std::string>{})
      .def_property_readonly("shape", [](const DataFrame& d) { return std::make_tuple(d.rows(), d.cols()); })
      .def_property_readonly("links", &link_names)
      .def_property_readonly("labels", &DataFrame::labels)
      .def_property_readonly("observed", [](const DataFrame& d) { return d.entries().size(); })
      .def("to_numpy", &frame_to_matrix);

  py::class_<Dictionary>(m, "Dictionary")
      .def(py::init(&dict_from_dense), "atoms"_a, "rows"_a, "cols"_a)
      .def_property_readonly("q", &Dictionary::size)
      .def_property_readonly("d_x", &Dictionary::d_x)
      .def_property_readonly("nu", &Dictionary::nu)
      .def("to_numpy", &dict_to_dense)
      .def("gram_kappa", [](const Dictionary& d) { return gram_kappa(d); });

  py::class_<Fit>(m, "Fit")
      .def_property_readonly("alpha", [](const Fit& f) { return f.result.params.alpha; })
      .def_property_readonly("theta", &Fit::theta)
      .def_property_readonly("R", [](const Fit& f) { return f.result.params.R; })
      .def_property_readonly("converged", [](const Fit& f) { return f.result.converged; })
      .def_property_readonly("iterations", [](const Fit& f) { return f.result.iterations; })
      .def_property_readonly("objective", [](const Fit& f) { return f.result.final_objective; })
      .def_property_readonly("lambda_s", [](const Fit& f) { return f.pen.lambda_S; })
      .def_property_readonly("lambda_l", [](const Fit& f) { return f.pen.lambda_L; })
      .def_property_readonly("trace", &Fit::trace)
      .def_property_readonly("messages",
                             [](const Fit& f) { return f.log ? f.log->message_count() : std::size_t{0}; });

  m.def("read_data_csv", py::overload_cast<const std::string&>(&read_data_csv), "path"_a);
  m.def("read_dictionary", py::overload_cast<const std::string&>(&read_dictionary), "path"_a);

  m.def("theoretical_lambdas",
        [](const DataFrame& df, const Dictionary& dict, std::pair<double, double> window, double c_const,
           double gamma) {
          const Penalties pen = theoretical_lambdas(df, dict, {window.first, window.second}, c_const, gamma);
          return std::make_pair(pen.lambda_S, pen.lambda_L);
        },
        "frame"_a, "dictionary"_a, "window"_a = std::make_pair(-1.0, 1.0), "c_const"_a = 1.0, "gamma"_a = 1.0,
        "(lambda_S, lambda_L) from the error-bound formulas.");

  m.def("fit", &fit, "frame"_a, "dictionary"_a, "lambda_s"_a, "lambda_l"_a, "max_iters"_a = 5000, "tol"_a = 1e-7,
        "seed"_a = 0, "workers"_a = 1, "alpha_update"_a = "auto",
        "Mixed coordinate gradient descent; workers > 1 runs the simulated distributed protocol.");

  m.def("impute", &impute, "frame"_a, "dictionary"_a, "alpha"_a, "theta"_a, "Mean g'(M) at every cell.");

  m.def("top_svd",
        [](const Eigen::MatrixXd& a, double delta, int max_iters, std::uint64_t seed) {
          SparseMatrix s(static_cast<int>(a.rows()), static_cast<int>(a.cols()));
          for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j)
              if (a(i, j) != 0.0) s.push_back(i, j, a(i, j));
          const TopSvd t = power_top_svd(s, {delta, max_iters, seed});
          return py::make_tuple(t.sigma1, t.u1, t.v1, t.converged);
        },
        "a"_a, "delta"_a = 1e-9, "max_iters"_a = 1000, "seed"_a = 0, "(sigma1, u1, v1, converged) by power iteration.");

  m.def("two_step",
        [](const DataFrame& df, const Dictionary& dict, double lambda_l) {
          const ModelParams p = two_step_baseline(df, dict, lambda_l);
          return py::make_tuple(p.alpha, dense_theta(p, df.rows(), df.cols()));
        },
        "frame"_a, "dictionary"_a, "lambda_l"_a, "Group means followed by soft-impute; returns (alpha, theta).");

  m.def("synth", &synth, "n"_a = 150, "p"_a = 30, "group_size"_a = 5, "rank"_a = 4, "sparsity"_a = 0.1,
        "alpha_scale"_a = 1.0, "theta_scale"_a = 0.0, "missing_frac"_a = 0.0,
        "links"_a = std::vector<std::string>{"gaussian"}, "seed"_a = 0);
}
