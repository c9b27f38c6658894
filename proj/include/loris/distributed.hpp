#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "loris/model.hpp"
#include "loris/solver.hpp"
#include "loris/svd.hpp"

namespace loris {

enum class PartitionStrategy { kRoundRobin, kByRow, kByBlock, kRandom };

const char* partition_strategy_name(PartitionStrategy s);
PartitionStrategy parse_partition_strategy(const std::string& text);

/// Assignment of each observed entry (in Omega order) to a worker.
struct Partition {
  int K = 1;
  std::vector<int> assignment;

  /// Entries of each worker, ascending.
  std::vector<std::vector<std::size_t>> blocks() const;
};

/// round_robin deals entries in Omega order; by_row and by_block split rows
/// (resp. columns) into K contiguous ranges; random assigns uniformly with
/// the given seed.
Partition partition_omega(const Problem& problem, int K, PartitionStrategy strategy, std::uint64_t seed = 0);

/// `count` identical messages of one iteration and phase. `doubles` is the
/// payload of each.
struct Message {
  int t = 0;
  std::string phase;
  bool up = false;  ///< worker -> server
  int worker = 0;
  std::size_t doubles = 0;
  std::size_t count = 1;

  std::size_t bytes() const { return count * doubles * sizeof(double); }
};

struct IterationCost {
  int t = 0;
  int power_rounds = 0;
  double server_flops = 0.0;
  std::vector<double> worker_flops;
};

/// Full transcript of the simulation plus per-iteration cost counters.
struct RoundLog {
  std::vector<Message> messages;
  std::vector<IterationCost> iterations;

  /// Appends a message, merging it into an identical record of the same
  /// iteration.
  void record(int t, const std::string& phase, bool up, int worker, std::size_t doubles);
  std::size_t message_count() const;

  std::size_t max_message_doubles() const;
  /// CSV with header t,phase,direction,bytes,worker; bytes is the total of
  /// the merged messages.
  void write_csv(std::ostream& os) const;

 private:
  using Key = std::tuple<std::string, bool, int, std::size_t>;
  int open_t_ = -1;
  std::map<Key, std::size_t> open_;
};

/// A worker holding its share Omega_k of the data and its copy of Theta on
/// Omega_k. Only vectors of length q, n, p or |Omega_k| and scalars leave it.
class Worker {
 public:
  Worker(const Problem& problem, std::vector<std::size_t> entries, int id);

  int id() const { return id_; }
  const EntryBlock& block() const { return block_; }
  const Eigen::VectorXd& theta() const { return theta_; }

  // Sums leave the worker unrounded (hi, lo) so that the server's merge
  // matches a single pass over all entries.
  Accum local_loss(const Eigen::VectorXd& alpha) const;
  AccumVec local_grad_alpha(const Eigen::VectorXd& alpha) const;
  AtomStats local_atom_stats(const ExactAlphaPlan& plan) const;
  /// min/max of the local predictor; (+inf, -inf) for an empty share.
  std::pair<double, double> local_predictor_range(const Eigen::VectorXd& alpha) const;

  /// Fix grad_Theta L_k at (alpha, local Theta) for the next products.
  void prepare(const Eigen::VectorXd& alpha);
  /// grad_Theta L_k v (length n) and its transpose product (length p).
  AccumVec forward(const Eigen::VectorXd& v) const;
  AccumVec backward(const Eigen::VectorXd& u) const;

  /// Theta_hat on this worker's entries, as pushed by the server.
  void receive_direction(Eigen::VectorXd theta_hat);
  /// <P_Omega_k(Theta - Theta_hat), grad_Theta L_k>.
  Accum local_inner() const;
  /// min/max of the predictor over the segment m -> m + beta (theta_hat - theta).
  std::pair<double, double> local_direction_range(double beta) const;
  void apply_step(double beta);

  /// Flops spent since the last call.
  double take_flops();

 private:
  EntryBlock block_;
  int id_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd m_;
  Eigen::VectorXd residual_;
  Eigen::VectorXd theta_hat_;
  mutable double flops_ = 0.0;
};

std::vector<Worker> make_workers(const Problem& problem, const Partition& partition);

/// grad_alpha restricted to the worker's entries.
Eigen::VectorXd worker_local_grad_alpha(const Worker& worker, const Eigen::VectorXd& alpha);

/// Distributed power method. Workers must be prepared at alpha_t; the server
/// broadcasts u (resp. v), each worker returns its product and the server
/// sums replies in worker-id order. P_max bounds the number of rounds; 0
/// selects ceil(10 log(1/delta)). Messages are appended to `log` when given.
TopSvd distributed_power_svd(std::vector<Worker>& workers, const Eigen::VectorXd& alpha_t, double delta, int P_max,
                             std::uint64_t seed, RoundLog* log = nullptr, int t = 0);

/// sum_k <P_Omega_k(Theta - Theta_hat), grad_k> + lambda_L (R - R_hat), with
/// the direction already pushed to the workers. Not clipped.
double distributed_beta_numerator(const std::vector<Worker>& workers, const Direction& dir, double R,
                                  double lambda_L);

/// Backend running every reduction through the workers.
class DistributedBackend final : public Backend {
 public:
  DistributedBackend(const Problem& problem, const Partition& partition);

  double loss(const Eigen::VectorXd& alpha) override;
  Eigen::VectorXd grad_alpha(const Eigen::VectorXd& alpha) override;
  AtomStats atom_stats(const ExactAlphaPlan& plan) override;
  std::pair<double, double> predictor_range(const Eigen::VectorXd& alpha) override;
  void prepare_gradient(const Eigen::VectorXd& alpha) override;
  TopSvd top_svd(const PowerOptions& opts) override;
  double direction_inner(const Direction& dir) override;
  std::pair<double, double> direction_range(const Direction& dir, double beta) override;
  void apply_step(double beta, const Direction& dir) override;
  void begin_iteration(int t) override;

  const RoundLog& log() const { return log_; }
  const std::vector<Worker>& workers() const { return workers_; }

 private:
  void send_down(const std::string& phase, int worker, std::size_t doubles);
  void send_up(const std::string& phase, int worker, std::size_t doubles);
  void push_direction(const Direction& dir);
  IterationCost& cost();
  void collect_worker_flops();

  const Problem* problem_;
  std::vector<Worker> workers_;
  RoundLog log_;
  int t_ = 0;
  Direction pushed_;
  bool has_pushed_ = false;
};

struct DistributedFit {
  FitResult fit;
  RoundLog log;
};

DistributedFit distributed_mcgd_fit(const Problem& problem, const SolverConfig& cfg, const Partition& partition);

}  // namespace loris
