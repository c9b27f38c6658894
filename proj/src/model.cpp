#include "loris/model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "loris/error.hpp"

namespace loris {

namespace {

long long cell_key(Cell c, int cols) { return static_cast<long long>(c.i) * cols + c.j; }

void check_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw Error(ErrorKind::kNonFinite, what);
}

}  // namespace

// ---------------------------------------------------------------------------
// DataFrame

DataFrame::DataFrame(int rows, int cols, std::vector<LinkKind> links, std::vector<Observation> entries,
                     std::vector<std::string> labels)
    : rows_(rows), cols_(cols), links_(std::move(links)), entries_(std::move(entries)), labels_(std::move(labels)) {
  if (rows_ < 0 || cols_ < 0) throw Error(ErrorKind::kDimensionMismatch, "negative data frame size");
  if (links_.size() != static_cast<std::size_t>(cols_)) {
    throw Error(ErrorKind::kDimensionMismatch, "data frame needs one link per column");
  }
  if (!labels_.empty() && labels_.size() != static_cast<std::size_t>(cols_)) {
    throw Error(ErrorKind::kDimensionMismatch, "data frame needs one label per column");
  }
  std::sort(entries_.begin(), entries_.end(), [](const Observation& a, const Observation& b) {
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    const Observation& o = entries_[e];
    if (o.i < 0 || o.i >= rows_ || o.j < 0 || o.j >= cols_) {
      throw Error(ErrorKind::kDimensionMismatch, "observation out of range");
    }
    if (e > 0 && entries_[e - 1].i == o.i && entries_[e - 1].j == o.j) {
      throw Error(ErrorKind::kDimensionMismatch, "duplicate observation");
    }
    if (!in_support(link(o.j), o.y)) {
      std::ostringstream os;
      os << "value " << o.y << " at (" << o.i << "," << o.j << ") outside the support of "
         << link_name(link(o.j));
      throw Error(ErrorKind::kInvalidArgument, os.str());
    }
  }
}

const double* DataFrame::find(int i, int j) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), Cell{i, j}, [](const Observation& o, Cell c) {
    return std::tie(o.i, o.j) < std::tie(c.i, c.j);
  });
  if (it == entries_.end() || it->i != i || it->j != j) return nullptr;
  return &it->y;
}

std::vector<Cell> DataFrame::missing_cells() const {
  std::vector<Cell> out;
  std::size_t e = 0;
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) {
      if (e < entries_.size() && entries_[e].i == i && entries_[e].j == j) {
        ++e;
      } else {
        out.push_back({i, j});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dictionary

Dictionary::Dictionary(int rows, int cols, std::vector<std::vector<DictEntry>> atoms)
    : rows_(rows), cols_(cols), atoms_(std::move(atoms)) {
  struct Item {
    long long key;
    int k;
    double value;
  };
  std::vector<Item> items;
  for (std::size_t k = 0; k < atoms_.size(); ++k) {
    double l1 = 0.0;
    for (const DictEntry& d : atoms_[k]) {
      if (d.cell.i < 0 || d.cell.i >= rows_ || d.cell.j < 0 || d.cell.j >= cols_) {
        throw Error(ErrorKind::kDimensionMismatch, "dictionary entry out of range");
      }
      check_finite(d.value, "dictionary value");
      l1 += std::abs(d.value);
      max_abs_ = std::max(max_abs_, std::abs(d.value));
      items.push_back({cell_key(d.cell, cols_), static_cast<int>(k), d.value});
    }
    d_x_ = std::max(d_x_, l1);
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return std::tie(a.key, a.k) < std::tie(b.key, b.k); });
  for (std::size_t t = 0; t < items.size(); ++t) {
    if (t > 0 && items[t - 1].key == items[t].key && items[t - 1].k == items[t].k) {
      throw Error(ErrorKind::kDimensionMismatch, "duplicate dictionary entry");
    }
    if (cell_keys_.empty() || cell_keys_.back() != items[t].key) {
      cell_keys_.push_back(items[t].key);
      cell_offsets_.push_back(cell_atoms_.size());
    }
    cell_atoms_.push_back({items[t].k, items[t].value});
  }
  cell_offsets_.push_back(cell_atoms_.size());
  for (std::size_t c = 0; c + 1 < cell_offsets_.size(); ++c) {
    double s = 0.0;
    for (std::size_t t = cell_offsets_[c]; t < cell_offsets_[c + 1]; ++t) s += std::abs(cell_atoms_[t].value);
    nu_ = std::max(nu_, s);
  }
}

std::span<const AtomValue> Dictionary::at(Cell cell) const {
  const long long key = cell_key(cell, cols_);
  auto it = std::lower_bound(cell_keys_.begin(), cell_keys_.end(), key);
  if (it == cell_keys_.end() || *it != key) return {};
  const auto c = static_cast<std::size_t>(it - cell_keys_.begin());
  return {cell_atoms_.data() + cell_offsets_[c], cell_offsets_[c + 1] - cell_offsets_[c]};
}

Eigen::MatrixXd Dictionary::dense_gram() const {
  const int q = size();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t c = 0; c + 1 < cell_offsets_.size(); ++c) {
    for (std::size_t a = cell_offsets_[c]; a < cell_offsets_[c + 1]; ++a) {
      for (std::size_t b = cell_offsets_[c]; b < cell_offsets_[c + 1]; ++b) {
        g(cell_atoms_[a].k, cell_atoms_[b].k) += cell_atoms_[a].value * cell_atoms_[b].value;
      }
    }
  }
  return g;
}

SparseMatrix Dictionary::sparse_gram() const {
  std::vector<std::pair<long long, double>> acc;
  const long long q = size();
  for (std::size_t c = 0; c + 1 < cell_offsets_.size(); ++c) {
    for (std::size_t a = cell_offsets_[c]; a < cell_offsets_[c + 1]; ++a) {
      for (std::size_t b = cell_offsets_[c]; b < cell_offsets_[c + 1]; ++b) {
        acc.emplace_back(cell_atoms_[a].k * q + cell_atoms_[b].k, cell_atoms_[a].value * cell_atoms_[b].value);
      }
    }
  }
  std::stable_sort(acc.begin(), acc.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseMatrix g(size(), size());
  for (std::size_t t = 0; t < acc.size();) {
    double s = 0.0;
    std::size_t u = t;
    for (; u < acc.size() && acc[u].first == acc[t].first; ++u) s += acc[u].second;
    g.push_back(static_cast<int>(acc[t].first / q), static_cast<int>(acc[t].first % q), s);
    t = u;
  }
  return g;
}

// ---------------------------------------------------------------------------
// ModelParams / Penalties

double ModelParams::theta_at(Cell cell) const {
  auto it = std::lower_bound(xi.begin(), xi.end(), cell);
  if (it == xi.end() || *it != cell) return 0.0;
  return theta[it - xi.begin()];
}

double linear_predictor(const Dictionary& dict, const ModelParams& params, Cell cell) {
  double m = params.theta_at(cell);
  for (const AtomValue& a : dict.at(cell)) m += params.alpha[a.k] * a.value;
  return m;
}

Eigen::MatrixXd dense_theta(const ModelParams& params, int rows, int cols) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  for (std::size_t x = 0; x < params.xi.size(); ++x) {
    const Cell c = params.xi[x];
    if (c.i < 0 || c.i >= rows || c.j < 0 || c.j >= cols) {
      throw Error(ErrorKind::kDimensionMismatch, "target cell outside the matrix");
    }
    out(c.i, c.j) = params.theta[static_cast<Eigen::Index>(x)];
  }
  return out;
}

std::vector<Cell> all_cells(int rows, int cols) {
  std::vector<Cell> out;
  out.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out.push_back({i, j});
  }
  return out;
}

void Penalties::validate() const {
  if (!(lambda_S > 0.0) || !std::isfinite(lambda_S) || !(lambda_L > 0.0) || !std::isfinite(lambda_L)) {
    throw Error(ErrorKind::kInvalidArgument, "lambda_S and lambda_L must be finite and > 0");
  }
  if (a_box < 0.0) throw Error(ErrorKind::kInvalidArgument, "box bound must be >= 0");
}

// ---------------------------------------------------------------------------
// Problem

Problem::Problem(DataFrame data, Dictionary dict, std::vector<Cell> extra_cells)
    : data_(std::move(data)), dict_(std::move(dict)) {
  if (dict_.rows() != data_.rows() || dict_.cols() != data_.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "dictionary and data frame shapes differ");
  }
  const auto& obs = data_.entries();
  xi_.reserve(obs.size() + extra_cells.size());
  for (const Observation& o : obs) xi_.push_back({o.i, o.j});
  for (const Cell& c : extra_cells) {
    if (c.i < 0 || c.i >= rows() || c.j < 0 || c.j >= cols()) {
      throw Error(ErrorKind::kDimensionMismatch, "target cell out of range");
    }
    xi_.push_back(c);
  }
  std::sort(xi_.begin(), xi_.end());
  xi_.erase(std::unique(xi_.begin(), xi_.end()), xi_.end());

  omega_in_xi_.resize(obs.size());
  offsets_.resize(obs.size());
  design_offsets_.assign(1, 0);
  std::size_t x = 0;
  for (std::size_t e = 0; e < obs.size(); ++e) {
    const Cell c{obs[e].i, obs[e].j};
    while (xi_[x] != c) ++x;
    omega_in_xi_[e] = x;
    offsets_[e] = loss_offset(data_.link(c.j), obs[e].y);
    for (const AtomValue& a : dict_.at(c)) design_.push_back(a);
    design_offsets_.push_back(design_.size());
  }
}

ModelParams Problem::zero_params() const {
  ModelParams p;
  p.alpha = Eigen::VectorXd::Zero(q());
  p.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(xi_.size()));
  p.R = 0.0;
  p.xi = xi_;
  return p;
}

void Problem::check_params(const ModelParams& params) const {
  if (params.alpha.size() != q()) throw Error(ErrorKind::kDimensionMismatch, "alpha length != q");
  if (params.xi != xi_ || params.theta.size() != static_cast<Eigen::Index>(xi_.size())) {
    throw Error(ErrorKind::kDimensionMismatch, "theta is not aligned with the problem's target cells");
  }
  if (params.R < 0.0) throw Error(ErrorKind::kInvalidArgument, "R must be >= 0");
}

Eigen::VectorXd Problem::omega_theta(const ModelParams& params) const {
  check_params(params);
  Eigen::VectorXd out(static_cast<Eigen::Index>(omega_size()));
  for (std::size_t e = 0; e < omega_size(); ++e) out[static_cast<Eigen::Index>(e)] = params.theta[omega_in_xi_[e]];
  return out;
}

// ---------------------------------------------------------------------------
// EntryBlock

EntryBlock::EntryBlock(const Problem& problem, std::vector<std::size_t> entries)
    : problem_(&problem), entries_(std::move(entries)) {
  for (std::size_t e : entries_) {
    if (e >= problem.omega_size()) throw Error(ErrorKind::kDimensionMismatch, "entry index out of range");
  }
}

EntryBlock EntryBlock::all(const Problem& problem) {
  std::vector<std::size_t> idx(problem.omega_size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return EntryBlock(problem, std::move(idx));
}

Eigen::VectorXd EntryBlock::predictor(const Eigen::VectorXd& alpha, const Eigen::VectorXd& theta_local) const {
  if (theta_local.size() != static_cast<Eigen::Index>(size()) || alpha.size() != problem_->q()) {
    throw Error(ErrorKind::kDimensionMismatch, "predictor: length mismatch");
  }
  Eigen::VectorXd m(theta_local.size());
  for (std::size_t t = 0; t < size(); ++t) {
    double s = 0.0;
    for (const AtomValue& a : problem_->design(entries_[t])) s += alpha[a.k] * a.value;
    m[static_cast<Eigen::Index>(t)] = s + theta_local[static_cast<Eigen::Index>(t)];
  }
  return m;
}

Accum EntryBlock::loss_partial(const Eigen::VectorXd& m) const {
  Accum total;
  for (std::size_t t = 0; t < size(); ++t) {
    const std::size_t e = entries_[t];
    const double mt = m[static_cast<Eigen::Index>(t)];
    total.add(-problem_->obs(e).y * mt + g_eval(problem_->link_of(e), mt) + problem_->offset(e));
  }
  return total;
}

double EntryBlock::loss(const Eigen::VectorXd& m) const {
  const double total = loss_partial(m).value();
  check_finite(total, "loss");
  return total;
}

Eigen::VectorXd EntryBlock::residual(const Eigen::VectorXd& m) const {
  Eigen::VectorXd r(m.size());
  for (std::size_t t = 0; t < size(); ++t) {
    const std::size_t e = entries_[t];
    const auto ti = static_cast<Eigen::Index>(t);
    r[ti] = -problem_->obs(e).y + g_grad(problem_->link_of(e), m[ti]);
  }
  return r;
}

AccumVec EntryBlock::grad_alpha_partial(const Eigen::VectorXd& residual) const {
  AccumVec g(problem_->q());
  for (std::size_t t = 0; t < size(); ++t) {
    const double r = residual[static_cast<Eigen::Index>(t)];
    for (const AtomValue& a : problem_->design(entries_[t])) g.add(a.k, r * a.value);
  }
  return g;
}

Eigen::VectorXd EntryBlock::grad_alpha(const Eigen::VectorXd& residual) const {
  return grad_alpha_partial(residual).value();
}

SparseMatrix EntryBlock::gradient_matrix(const Eigen::VectorXd& residual) const {
  std::vector<Cell> cells;
  cells.reserve(size());
  for (std::size_t e : entries_) cells.push_back({problem_->obs(e).i, problem_->obs(e).j});
  return SparseMatrix(problem_->rows(), problem_->cols(), std::move(cells),
                      std::vector<double>(residual.data(), residual.data() + residual.size()));
}

AccumVec EntryBlock::apply_partial(const Eigen::VectorXd& residual, const Eigen::VectorXd& x) const {
  AccumVec y(problem_->rows());
  for (std::size_t t = 0; t < size(); ++t) {
    const Observation& o = problem_->obs(entries_[t]);
    y.add(o.i, residual[static_cast<Eigen::Index>(t)] * x[o.j]);
  }
  return y;
}

AccumVec EntryBlock::apply_transpose_partial(const Eigen::VectorXd& residual, const Eigen::VectorXd& x) const {
  AccumVec y(problem_->cols());
  for (std::size_t t = 0; t < size(); ++t) {
    const Observation& o = problem_->obs(entries_[t]);
    y.add(o.j, residual[static_cast<Eigen::Index>(t)] * x[o.i]);
  }
  return y;
}

Eigen::VectorXd EntryBlock::apply(const Eigen::VectorXd& residual, const Eigen::VectorXd& x) const {
  return apply_partial(residual, x).value();
}

Eigen::VectorXd EntryBlock::apply_transpose(const Eigen::VectorXd& residual, const Eigen::VectorXd& x) const {
  return apply_transpose_partial(residual, x).value();
}

// ---------------------------------------------------------------------------
// Objective and gradients

double loss(const Problem& problem, const ModelParams& params) {
  const EntryBlock block = EntryBlock::all(problem);
  return block.loss(block.predictor(params.alpha, problem.omega_theta(params)));
}

double objective_F(const Problem& problem, const ModelParams& params, const Penalties& pen) {
  return loss(problem, params) + pen.lambda_S * params.alpha.lpNorm<1>() + pen.lambda_L * params.R;
}

SparseMatrix grad_theta(const Problem& problem, const ModelParams& params) {
  const EntryBlock block = EntryBlock::all(problem);
  return block.gradient_matrix(block.residual(block.predictor(params.alpha, problem.omega_theta(params))));
}

Eigen::VectorXd grad_alpha(const Problem& problem, const ModelParams& params) {
  const EntryBlock block = EntryBlock::all(problem);
  return block.grad_alpha(block.residual(block.predictor(params.alpha, problem.omega_theta(params))));
}

// ---------------------------------------------------------------------------
// Diagnostics

double gram_kappa(const Dictionary& dict) {
  const int q = dict.size();
  if (q < 1) throw Error(ErrorKind::kInvalidArgument, "gram_kappa needs q >= 1");
  if (q <= 64) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dict.dense_gram(), Eigen::EigenvaluesOnly);
    return eig.eigenvalues()[0];
  }
  // Shifted power iteration: lambda_min(G) = c - lambda_max(cI - G), with c a
  // Gershgorin bound on lambda_max(G) so that cI - G is positive semidefinite.
  const SparseMatrix gram = dict.sparse_gram();
  Eigen::VectorXd row_abs = Eigen::VectorXd::Zero(q);
  for (std::size_t e = 0; e < gram.nonzeros(); ++e) row_abs[gram.cells()[e].i] += std::abs(gram.values()[e]);
  const double shift = row_abs.maxCoeff();
  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> normal;
  Eigen::VectorXd x(q);
  for (int k = 0; k < q; ++k) x[k] = normal(rng);
  x.normalize();
  double mu = 0.0;
  for (int it = 0; it < 20000; ++it) {
    Eigen::VectorXd y = shift * x - gram.apply(x);
    const double next = x.dot(y);
    const double norm = y.norm();
    if (norm == 0.0) {
      mu = 0.0;
      break;
    }
    const bool done = it > 0 && std::abs(next - mu) <= 1e-13 * std::max(1.0, shift);
    mu = next;
    x = y / norm;
    if (done) break;
  }
  return shift - mu;
}

bool AssumptionReport::has_failures() const {
  return std::any_of(checks.begin(), checks.end(), [](const auto& c) { return c.status == CheckStatus::kFail; });
}

bool AssumptionReport::has_warnings() const {
  return std::any_of(checks.begin(), checks.end(), [](const auto& c) { return c.status == CheckStatus::kWarn; });
}

std::string AssumptionReport::to_string() const {
  std::ostringstream os;
  os.precision(10);
  os << "nu = " << nu << "\nd_X = " << d_x << "\nkappa^2 = " << kappa_sq << '\n';
  for (const auto& c : checks) {
    const char* tag = c.status == CheckStatus::kPass ? "PASS" : c.status == CheckStatus::kWarn ? "WARN" : "FAIL";
    os << '[' << tag << "] " << c.name << ": " << c.detail << '\n';
  }
  return os.str();
}

AssumptionReport validate_assumptions(const DataFrame& data, const Dictionary& dict, const ModelParams* truth,
                                      double a_box) {
  AssumptionReport report;
  auto add = [&](std::string name, CheckStatus status, std::string detail) {
    report.checks.push_back({std::move(name), status, std::move(detail)});
  };
  std::ostringstream os;

  if (dict.rows() != data.rows() || dict.cols() != data.cols()) {
    add("shape", CheckStatus::kFail, "dictionary and data frame shapes differ");
    return report;
  }
  report.nu = dict.nu();
  report.d_x = dict.d_x();

  os << "max |X(k)_ij| = " << dict.max_abs();
  add("dictionary entries in [-1,1]", dict.max_abs() <= 1.0 ? CheckStatus::kPass : CheckStatus::kFail, os.str());

  if (dict.size() > 0) {
    report.kappa_sq = gram_kappa(dict);
    os.str("");
    os << "smallest Gram eigenvalue = " << report.kappa_sq;
    add("Gram matrix positive definite", report.kappa_sq > 1e-10 ? CheckStatus::kPass : CheckStatus::kWarn,
        os.str());
  } else {
    add("Gram matrix positive definite", CheckStatus::kWarn, "empty dictionary");
  }

  const double pi_hat = data.rows() * data.cols() > 0
                            ? static_cast<double>(data.entries().size()) / (double(data.rows()) * data.cols())
                            : 0.0;
  os.str("");
  os << "observed fraction = " << pi_hat;
  add("observations present", pi_hat > 0.0 ? CheckStatus::kPass : CheckStatus::kFail, os.str());

  if (truth != nullptr) {
    if (truth->alpha.size() != dict.size()) {
      add("ground truth shape", CheckStatus::kFail, "alpha length != q");
      return report;
    }
    const double theta_norm = truth->theta.norm();
    double worst = 0.0;
    int worst_k = -1;
    for (int k = 0; k < dict.size(); ++k) {
      if (truth->alpha[k] == 0.0) continue;
      double ip = 0.0;
      for (const DictEntry& d : dict.atom(k)) ip += d.value * truth->theta_at(d.cell);
      if (std::abs(ip) > worst) {
        worst = std::abs(ip);
        worst_k = k;
      }
    }
    os.str("");
    os << "max |<Theta0, X(k)>| over active k = " << worst;
    if (worst_k >= 0) os << " (k=" << worst_k << ")";
    add("identifiability <Theta0, X(k)> = 0",
        worst <= 1e-8 * std::max(theta_norm, 1e-300) || worst == 0.0 ? CheckStatus::kPass : CheckStatus::kWarn,
        os.str());
    if (a_box > 0.0) {
      const double amax = truth->alpha.size() ? truth->alpha.lpNorm<Eigen::Infinity>() : 0.0;
      const double tmax = truth->theta.size() ? truth->theta.lpNorm<Eigen::Infinity>() : 0.0;
      os.str("");
      os << "||alpha0||_inf = " << amax << ", ||Theta0||_inf = " << tmax << ", a = " << a_box;
      add("box bound", amax <= a_box && tmax <= a_box ? CheckStatus::kPass : CheckStatus::kWarn, os.str());
    }
  }
  return report;
}

}  // namespace loris
