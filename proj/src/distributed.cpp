#include "loris/distributed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

#include "loris/error.hpp"

namespace loris {

const char* partition_strategy_name(PartitionStrategy s) {
  switch (s) {
    case PartitionStrategy::kRoundRobin: return "round_robin";
    case PartitionStrategy::kByRow: return "by_row";
    case PartitionStrategy::kByBlock: return "by_block";
    case PartitionStrategy::kRandom: return "random";
  }
  return "round_robin";
}

PartitionStrategy parse_partition_strategy(const std::string& text) {
  if (text == "round_robin") return PartitionStrategy::kRoundRobin;
  if (text == "by_row") return PartitionStrategy::kByRow;
  if (text == "by_block") return PartitionStrategy::kByBlock;
  if (text == "random") return PartitionStrategy::kRandom;
  throw Error(ErrorKind::kParse, "unknown partition strategy '" + text + "'");
}

std::vector<std::vector<std::size_t>> Partition::blocks() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(K));
  for (std::size_t e = 0; e < assignment.size(); ++e) out[static_cast<std::size_t>(assignment[e])].push_back(e);
  return out;
}

Partition partition_omega(const Problem& problem, int K, PartitionStrategy strategy, std::uint64_t seed) {
  if (K < 1) throw Error(ErrorKind::kInvalidArgument, "K must be >= 1");
  if (problem.omega_size() == 0) throw Error(ErrorKind::kEmptyOmega, "cannot partition an empty Omega");
  Partition part;
  part.K = K;
  part.assignment.resize(problem.omega_size());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, K - 1);
  const long long n = problem.rows();
  const long long p = problem.cols();
  for (std::size_t e = 0; e < problem.omega_size(); ++e) {
    const Observation& o = problem.obs(e);
    int w = 0;
    switch (strategy) {
      case PartitionStrategy::kRoundRobin: w = static_cast<int>(e % static_cast<std::size_t>(K)); break;
      case PartitionStrategy::kByRow: w = static_cast<int>(o.i * K / n); break;
      case PartitionStrategy::kByBlock: w = static_cast<int>(o.j * K / p); break;
      case PartitionStrategy::kRandom: w = pick(rng); break;
    }
    part.assignment[e] = w;
  }
  return part;
}

void RoundLog::record(int t, const std::string& phase, bool up, int worker, std::size_t doubles) {
  if (t != open_t_) {
    open_.clear();
    open_t_ = t;
  }
  const auto [it, fresh] = open_.try_emplace(Key{phase, up, worker, doubles}, messages.size());
  if (fresh) {
    messages.push_back({t, phase, up, worker, doubles, 1});
  } else {
    ++messages[it->second].count;
  }
}

std::size_t RoundLog::message_count() const {
  std::size_t total = 0;
  for (const Message& m : messages) total += m.count;
  return total;
}

std::size_t RoundLog::max_message_doubles() const {
  std::size_t best = 0;
  for (const Message& m : messages) best = std::max(best, m.doubles);
  return best;
}

void RoundLog::write_csv(std::ostream& os) const {
  os << "t,phase,direction,bytes,worker\n";
  for (const Message& m : messages) {
    os << m.t << ',' << m.phase << ',' << (m.up ? "up" : "down") << ',' << m.bytes() << ',' << m.worker << '\n';
  }
}

// ---------------------------------------------------------------------------
// Worker

Worker::Worker(const Problem& problem, std::vector<std::size_t> entries, int id)
    : block_(problem, std::move(entries)),
      id_(id),
      theta_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(block_.size()))) {}

Accum Worker::local_loss(const Eigen::VectorXd& alpha) const {
  return block_.loss_partial(block_.predictor(alpha, theta_));
}

AccumVec Worker::local_grad_alpha(const Eigen::VectorXd& alpha) const {
  return block_.grad_alpha_partial(block_.residual(block_.predictor(alpha, theta_)));
}

AtomStats Worker::local_atom_stats(const ExactAlphaPlan& plan) const {
  return accumulate_atom_stats(block_, plan, theta_);
}

std::pair<double, double> Worker::local_predictor_range(const Eigen::VectorXd& alpha) const {
  if (block_.size() == 0) {
    return {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  }
  const Eigen::VectorXd m = block_.predictor(alpha, theta_);
  return {m.minCoeff(), m.maxCoeff()};
}

void Worker::prepare(const Eigen::VectorXd& alpha) {
  m_ = block_.predictor(alpha, theta_);
  residual_ = block_.residual(m_);
  flops_ += 4.0 * static_cast<double>(block_.size());
}

AccumVec Worker::forward(const Eigen::VectorXd& v) const {
  flops_ += 8.0 * static_cast<double>(block_.size());
  return block_.apply_partial(residual_, v);
}

AccumVec Worker::backward(const Eigen::VectorXd& u) const {
  flops_ += 8.0 * static_cast<double>(block_.size());
  return block_.apply_transpose_partial(residual_, u);
}

void Worker::receive_direction(Eigen::VectorXd theta_hat) {
  if (theta_hat.size() != theta_.size()) throw Error(ErrorKind::kDimensionMismatch, "direction slice length");
  theta_hat_ = std::move(theta_hat);
}

Accum Worker::local_inner() const {
  Accum inner;
  for (Eigen::Index t = 0; t < theta_.size(); ++t) inner.add((theta_[t] - theta_hat_[t]) * residual_[t]);
  flops_ += 8.0 * static_cast<double>(theta_.size());
  return inner;
}

std::pair<double, double> Worker::local_direction_range(double beta) const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (Eigen::Index t = 0; t < theta_.size(); ++t) {
    const double far = m_[t] + beta * (theta_hat_[t] - theta_[t]);
    lo = std::min({lo, m_[t], far});
    hi = std::max({hi, m_[t], far});
  }
  return {lo, hi};
}

void Worker::apply_step(double beta) {
  for (Eigen::Index t = 0; t < theta_.size(); ++t) theta_[t] = convex_step(theta_[t], theta_hat_[t], beta);
  flops_ += 3.0 * static_cast<double>(theta_.size());
}

double Worker::take_flops() {
  const double f = flops_;
  flops_ = 0.0;
  return f;
}

std::vector<Worker> make_workers(const Problem& problem, const Partition& partition) {
  if (partition.assignment.size() != problem.omega_size()) {
    throw Error(ErrorKind::kDimensionMismatch, "partition does not match Omega");
  }
  for (int w : partition.assignment) {
    if (w < 0 || w >= partition.K) throw Error(ErrorKind::kInvalidArgument, "worker id out of range");
  }
  std::vector<Worker> workers;
  auto blocks = partition.blocks();
  workers.reserve(blocks.size());
  for (std::size_t k = 0; k < blocks.size(); ++k) workers.emplace_back(problem, std::move(blocks[k]), int(k));
  return workers;
}

Eigen::VectorXd worker_local_grad_alpha(const Worker& worker, const Eigen::VectorXd& alpha) {
  return worker.local_grad_alpha(alpha).value();
}

namespace {

Eigen::VectorXd direction_slice(const Problem& problem, const EntryBlock& block, const Direction& dir) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(block.size()));
  for (std::size_t t = 0; t < block.size(); ++t) {
    const Observation& o = problem.obs(block.entries()[t]);
    out[static_cast<Eigen::Index>(t)] = dir.at(o.i, o.j);
  }
  return out;
}

int default_power_rounds(double delta) { return static_cast<int>(std::ceil(10.0 * std::log(1.0 / delta))); }

// Runs the power method against the workers; `down`/`up` record messages.
template <typename Down, typename Up>
TopSvd power_rounds(std::vector<Worker>& workers, int rows, int cols, const PowerOptions& opts, Down&& down,
                    Up&& up) {
  auto forward = [&](const Eigen::VectorXd& v) {
    AccumVec sum(rows);
    for (Worker& w : workers) {
      down("power_v", w.id(), static_cast<std::size_t>(v.size()));
      const AccumVec part = w.forward(v);
      up("power_u", w.id(), 2 * static_cast<std::size_t>(part.size()));
      sum.merge(part);
    }
    return sum.value();
  };
  auto backward = [&](const Eigen::VectorXd& u) {
    AccumVec sum(cols);
    for (Worker& w : workers) {
      down("power_u", w.id(), static_cast<std::size_t>(u.size()));
      const AccumVec part = w.backward(u);
      up("power_v", w.id(), 2 * static_cast<std::size_t>(part.size()));
      sum.merge(part);
    }
    return sum.value();
  };
  return power_iterate(rows, cols, forward, backward, opts);
}

}  // namespace

TopSvd distributed_power_svd(std::vector<Worker>& workers, const Eigen::VectorXd& alpha_t, double delta, int P_max,
                             std::uint64_t seed, RoundLog* log, int t) {
  if (workers.empty()) throw Error(ErrorKind::kEmptyOmega, "no workers");
  const Problem& problem = workers.front().block().problem();
  for (Worker& w : workers) w.prepare(alpha_t);
  const PowerOptions opts{delta, P_max > 0 ? P_max : default_power_rounds(delta), seed};
  auto record = [&](bool up) {
    return [log, t, up](const char* phase, int worker, std::size_t doubles) {
      if (log != nullptr) log->record(t, phase, up, worker, doubles);
    };
  };
  return power_rounds(workers, problem.rows(), problem.cols(), opts, record(false), record(true));
}

double distributed_beta_numerator(const std::vector<Worker>& workers, const Direction& dir, double R,
                                  double lambda_L) {
  Accum inner;
  for (const Worker& w : workers) inner.merge(w.local_inner());
  return inner.value() + lambda_L * (R - dir.R_hat);
}

// ---------------------------------------------------------------------------
// Backend

DistributedBackend::DistributedBackend(const Problem& problem, const Partition& partition)
    : problem_(&problem), workers_(make_workers(problem, partition)) {}

void DistributedBackend::send_down(const std::string& phase, int worker, std::size_t doubles) {
  log_.record(t_, phase, false, worker, doubles);
}

void DistributedBackend::send_up(const std::string& phase, int worker, std::size_t doubles) {
  log_.record(t_, phase, true, worker, doubles);
}

IterationCost& DistributedBackend::cost() {
  if (log_.iterations.empty() || log_.iterations.back().t != t_) {
    IterationCost c;
    c.t = t_;
    c.worker_flops.assign(workers_.size(), 0.0);
    log_.iterations.push_back(c);
  }
  return log_.iterations.back();
}

void DistributedBackend::collect_worker_flops() {
  IterationCost& c = cost();
  for (std::size_t k = 0; k < workers_.size(); ++k) c.worker_flops[k] += workers_[k].take_flops();
}

void DistributedBackend::begin_iteration(int t) {
  collect_worker_flops();
  t_ = t;
  has_pushed_ = false;
  cost();
}

double DistributedBackend::loss(const Eigen::VectorXd& alpha) {
  Accum total;
  for (const Worker& w : workers_) {
    send_down("loss", w.id(), static_cast<std::size_t>(alpha.size()));
    total.merge(w.local_loss(alpha));
    send_up("loss", w.id(), 2);
  }
  cost().server_flops += 4.0 * static_cast<double>(workers_.size());
  collect_worker_flops();
  const double value = total.value();
  if (!std::isfinite(value)) throw Error(ErrorKind::kNonFinite, "loss");
  return value;
}

Eigen::VectorXd DistributedBackend::grad_alpha(const Eigen::VectorXd& alpha) {
  AccumVec sum(problem_->q());
  for (const Worker& w : workers_) {
    send_down("grad_alpha", w.id(), static_cast<std::size_t>(alpha.size()));
    sum.merge(w.local_grad_alpha(alpha));
    send_up("grad_alpha", w.id(), 2 * static_cast<std::size_t>(problem_->q()));
  }
  // aggregation plus the server-side soft-threshold
  cost().server_flops += static_cast<double>((4 * workers_.size() + 3) * static_cast<std::size_t>(problem_->q()));
  return sum.value();
}

AtomStats DistributedBackend::atom_stats(const ExactAlphaPlan& plan) {
  AtomStats sum{AccumVec(problem_->q()), AccumVec(problem_->q())};
  for (const Worker& w : workers_) {
    send_down("atom_stats", w.id(), 0);
    sum.merge(w.local_atom_stats(plan));
    send_up("atom_stats", w.id(), 4 * static_cast<std::size_t>(problem_->q()));
  }
  cost().server_flops += static_cast<double>((8 * workers_.size() + 8) * static_cast<std::size_t>(problem_->q()));
  return sum;
}

std::pair<double, double> DistributedBackend::predictor_range(const Eigen::VectorXd& alpha) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Worker& w : workers_) {
    send_down("range", w.id(), static_cast<std::size_t>(alpha.size()));
    const auto r = w.local_predictor_range(alpha);
    send_up("range", w.id(), 2);
    lo = std::min(lo, r.first);
    hi = std::max(hi, r.second);
  }
  return {lo, hi};
}

void DistributedBackend::prepare_gradient(const Eigen::VectorXd& alpha) {
  for (Worker& w : workers_) {
    send_down("prepare", w.id(), static_cast<std::size_t>(alpha.size()));
    w.prepare(alpha);
  }
}

TopSvd DistributedBackend::top_svd(const PowerOptions& opts) {
  int rounds = 0;
  auto down = [&](const char* phase, int worker, std::size_t doubles) {
    if (worker == 0 && std::string(phase) == "power_u") ++rounds;
    send_down(phase, worker, doubles);
  };
  auto up = [&](const char* phase, int worker, std::size_t doubles) { send_up(phase, worker, doubles); };
  TopSvd svd;
  try {
    svd = power_rounds(workers_, problem_->rows(), problem_->cols(), opts, down, up);
  } catch (...) {
    cost().power_rounds += rounds;
    throw;
  }
  IterationCost& c = cost();
  c.power_rounds += rounds;
  // per round: two aggregations of K vectors plus two normalizations
  const double len = static_cast<double>(problem_->rows() + problem_->cols());
  c.server_flops += rounds * (4.0 * static_cast<double>(workers_.size()) * len + 3.0 * len);
  return svd;
}

void DistributedBackend::push_direction(const Direction& dir) {
  const bool same = has_pushed_ && pushed_.active == dir.active && pushed_.scale == dir.scale &&
                    pushed_.R_hat == dir.R_hat && pushed_.u.size() == dir.u.size() &&
                    pushed_.v.size() == dir.v.size() && (pushed_.u.array() == dir.u.array()).all() &&
                    (pushed_.v.array() == dir.v.array()).all();
  if (same) return;
  for (Worker& w : workers_) {
    Eigen::VectorXd slice = direction_slice(*problem_, w.block(), dir);
    send_down("direction", w.id(), static_cast<std::size_t>(slice.size()));
    w.receive_direction(std::move(slice));
  }
  cost().server_flops += 2.0 * static_cast<double>(problem_->omega_size());
  pushed_ = dir;
  has_pushed_ = true;
}

double DistributedBackend::direction_inner(const Direction& dir) {
  push_direction(dir);
  Accum inner;
  for (const Worker& w : workers_) {
    inner.merge(w.local_inner());
    send_up("inner", w.id(), 2);
  }
  cost().server_flops += 4.0 * static_cast<double>(workers_.size());
  return inner.value();
}

std::pair<double, double> DistributedBackend::direction_range(const Direction& dir, double beta) {
  push_direction(dir);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Worker& w : workers_) {
    send_down("range", w.id(), 1);
    const auto r = w.local_direction_range(beta);
    send_up("range", w.id(), 2);
    lo = std::min(lo, r.first);
    hi = std::max(hi, r.second);
  }
  return {lo, hi};
}

void DistributedBackend::apply_step(double beta, const Direction& dir) {
  push_direction(dir);
  for (Worker& w : workers_) {
    send_down("step", w.id(), 1);
    w.apply_step(beta);
  }
  // server-side Theta update on Xi and the squared distance over Omega
  cost().server_flops += 3.0 * static_cast<double>(problem_->xi().size() + problem_->omega_size());
  collect_worker_flops();
}

DistributedFit distributed_mcgd_fit(const Problem& problem, const SolverConfig& cfg, const Partition& partition) {
  DistributedBackend backend(problem, partition);
  DistributedFit out;
  out.fit = run_mcgd(problem, cfg, backend);
  out.log = backend.log();
  return out;
}

}  // namespace loris
