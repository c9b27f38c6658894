#include <random>
#include <sstream>

#include <doctest.h>

#include "helpers.hpp"
#include "loris/distributed.hpp"
#include "loris/error.hpp"

using namespace loris;

namespace {

Problem gaussian_problem(int n, int p, double missing, std::uint64_t seed) {
  const auto inst = testing::random_instance(n, p, 3, {LinkKind::gaussian()}, missing, seed);
  return Problem(inst.data, inst.dict, inst.data.missing_cells());
}

}  // namespace

TEST_CASE("partitions cover Omega exactly once") {
  const Problem pb = gaussian_problem(7, 5, 0.3, 1);
  for (auto strategy : {PartitionStrategy::kRoundRobin, PartitionStrategy::kByRow, PartitionStrategy::kByBlock,
                        PartitionStrategy::kRandom}) {
    for (int K : {1, 2, 3, 8}) {
      const Partition part = partition_omega(pb, K, strategy, 4);
      REQUIRE(part.assignment.size() == pb.omega_size());
      std::vector<int> seen(pb.omega_size(), 0);
      for (const auto& block : part.blocks())
        for (std::size_t e : block) ++seen[e];
      for (int s : seen) CHECK(s == 1);
      if (K == 1)
        for (int w : part.assignment) CHECK(w == 0);
    }
  }
  CHECK_THROWS_AS(partition_omega(pb, 0, PartitionStrategy::kRoundRobin), Error);
}

TEST_CASE("partition examples") {
  std::vector<Observation> six;
  for (int e = 0; e < 6; ++e) six.push_back({e / 3, e % 3, 0.0});
  const Problem pb(DataFrame(2, 3, std::vector<LinkKind>(3, LinkKind::gaussian()), six), Dictionary(2, 3, {}));
  const auto rr = partition_omega(pb, 3, PartitionStrategy::kRoundRobin).blocks();
  for (const auto& b : rr) CHECK(b.size() == 2);

  std::vector<Observation> four;
  for (int i = 0; i < 4; ++i) four.push_back({i, 0, 0.0});
  const Problem rows(DataFrame(4, 1, {LinkKind::gaussian()}, four), Dictionary(4, 1, {}));
  const Partition by_row = partition_omega(rows, 2, PartitionStrategy::kByRow);
  CHECK(by_row.assignment == std::vector<int>{0, 0, 1, 1});
  CHECK(parse_partition_strategy("by_block") == PartitionStrategy::kByBlock);
  CHECK(std::string(partition_strategy_name(PartitionStrategy::kRandom)) == "random");
}

TEST_CASE("worker gradients add up to the centralized gradient") {
  const auto inst = testing::random_instance(8, 6, 4, testing::mixed_links(), 0.25, 3);
  const Problem pb(inst.data, inst.dict);
  const ModelParams params = testing::random_params(pb, 0.0, 1);  // Theta = 0 matches fresh workers
  Eigen::VectorXd alpha = Eigen::VectorXd::LinSpaced(pb.q(), -0.5, 0.5);
  ModelParams at = pb.zero_params();
  at.alpha = alpha;
  const Eigen::VectorXd central = grad_alpha(pb, at);
  for (int K : {1, 2, 4}) {
    const Partition part = partition_omega(pb, K, PartitionStrategy::kRandom, 7);
    const std::vector<Worker> workers = make_workers(pb, part);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(pb.q());
    for (const Worker& w : workers) sum += worker_local_grad_alpha(w, alpha);
    CHECK((sum - central).norm() <= 1e-12 * (1 + central.norm()));
    if (K == 1) CHECK(sum == central);
  }
  // a worker with no entries contributes nothing
  Partition lopsided;
  lopsided.K = 2;
  lopsided.assignment.assign(pb.omega_size(), 0);
  const std::vector<Worker> workers = make_workers(pb, lopsided);
  CHECK(worker_local_grad_alpha(workers[1], alpha).norm() == 0.0);
  (void)params;
}

TEST_CASE("distributed power method") {
  const auto inst = testing::random_instance(9, 7, 3, testing::mixed_links(), 0.2, 5);
  const Problem pb(inst.data, inst.dict);
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(pb.q(), 0.1);
  ModelParams at = pb.zero_params();
  at.alpha = alpha;
  const TopSvd central = power_top_svd(grad_theta(pb, at), {1e-10, 1000, 42});
  for (int K : {1, 2, 4}) {
    std::vector<Worker> workers = make_workers(pb, partition_omega(pb, K, PartitionStrategy::kRandom, 3));
    for (Worker& w : workers) w.prepare(alpha);
    RoundLog log;
    const TopSvd dist = distributed_power_svd(workers, alpha, 1e-10, 1000, 42, &log, 1);
    CHECK(std::abs(dist.sigma1 - central.sigma1) <= 1e-12 * central.sigma1);
    if (K == 1) CHECK(dist.sigma1 == central.sigma1);
    // one u broadcast + one v broadcast per round and worker
    std::size_t rounds_down = 0;
    for (const Message& m : log.messages)
      if (!m.up && m.phase == "power_u") rounds_down += m.count;
    CHECK(rounds_down == static_cast<std::size_t>(dist.iters * K));
  }

  // diag(3, 1) split across two workers
  const DataFrame diag(2, 2, {LinkKind::gaussian(), LinkKind::gaussian()}, {{0, 0, -3.0}, {1, 1, -1.0}});
  const Problem dp(diag, Dictionary(2, 2, {}));
  std::vector<Worker> workers = make_workers(dp, partition_omega(dp, 2, PartitionStrategy::kRoundRobin));
  for (Worker& w : workers) w.prepare(Eigen::VectorXd());
  CHECK(distributed_power_svd(workers, Eigen::VectorXd(), 1e-12, 1000, 1).sigma1 == doctest::Approx(3.0));
}

TEST_CASE("distributed step-size numerator") {
  const Problem pb = gaussian_problem(6, 5, 0.2, 8);
  const ModelParams params = pb.zero_params();
  const Eigen::VectorXd alpha = params.alpha;
  const SparseMatrix g = grad_theta(pb, params);
  const TopSvd svd = power_top_svd(g, {1e-10, 1000, 2});
  const Direction dir = cg_direction(svd, 0.1, 3.0);
  const BetaTerms central = beta_terms(pb, params, dir, 0.1);
  for (int K : {1, 2, 4}) {
    std::vector<Worker> workers = make_workers(pb, partition_omega(pb, K, PartitionStrategy::kByRow));
    for (Worker& w : workers) {
      w.prepare(alpha);
      Eigen::VectorXd local(static_cast<Eigen::Index>(w.block().size()));
      for (std::size_t t = 0; t < w.block().size(); ++t) {
        const Observation& o = pb.obs(w.block().entries()[t]);
        local[static_cast<Eigen::Index>(t)] = dir.at(o.i, o.j);
      }
      w.receive_direction(local);
    }
    const double num = distributed_beta_numerator(workers, dir, params.R, 0.1);
    CHECK(std::abs(num - central.numerator) <= 1e-12 * (1 + std::abs(central.numerator)));
  }
  // direction equal to the current point (0, 0) with R = 0
  std::vector<Worker> workers = make_workers(pb, partition_omega(pb, 2, PartitionStrategy::kByRow));
  for (Worker& w : workers) {
    w.prepare(alpha);
    w.receive_direction(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(w.block().size())));
  }
  CHECK(distributed_beta_numerator(workers, Direction{}, 0.0, 0.1) == 0.0);
}

TEST_CASE("distributed fit follows the centralized trajectory") {
  const auto inst = testing::random_instance(20, 10, 4, testing::mixed_links(), 0.3, 11);
  const Problem pb(inst.data, inst.dict, inst.data.missing_cells());
  SolverConfig cfg;
  cfg.pen = {0.5, 1.0, 0.0};
  cfg.max_iters = 150;
  cfg.seed = 3;
  const FitResult central = mcgd_fit(pb, cfg);
  for (int K : {1, 4}) {
    const DistributedFit dist = distributed_mcgd_fit(pb, cfg, partition_omega(pb, K, PartitionStrategy::kRandom, 5));
    REQUIRE(dist.fit.trace.size() == central.trace.size());
    for (std::size_t t = 0; t < central.trace.size(); ++t) {
      CHECK(std::abs(dist.fit.trace[t].F - central.trace[t].F) <= 1e-10);
    }
    CHECK((dist.fit.params.theta - central.params.theta).norm() <= 1e-9 * (1 + central.params.theta.norm()));
    CHECK((dist.fit.params.alpha - central.params.alpha).norm() <= 1e-9 * (1 + central.params.alpha.norm()));

    // accounting: P power rounds logged for each active iteration
    for (std::size_t t = 1; t < central.trace.size(); ++t) {
      const IterRecord& r = dist.fit.trace[t];
      if (!r.direction_active) continue;
      std::size_t u_msgs = 0;
      for (const Message& m : dist.log.messages)
        if (m.t == r.t && m.phase == "power_u" && !m.up) u_msgs += m.count;
      CHECK(u_msgs == static_cast<std::size_t>(r.power_iters * K));
    }
    // no message carries a full n x p matrix
    CHECK(dist.log.max_message_doubles() < static_cast<std::size_t>(pb.rows() * pb.cols()));
  }
}

TEST_CASE("round log CSV") {
  RoundLog log;
  log.record(1, "power_u", false, 0, 10);
  log.record(1, "power_u", false, 0, 10);
  log.record(1, "power_v", true, 1, 4);
  log.record(2, "power_u", false, 0, 10);
  CHECK(log.message_count() == 4);
  CHECK(log.messages.size() == 3);
  CHECK(log.max_message_doubles() == 10);
  std::ostringstream os;
  log.write_csv(os);
  const std::string csv = os.str();
  CHECK(csv.rfind("t,phase,direction,bytes,worker\n", 0) == 0);
  CHECK(csv.find("1,power_u,down,160,0") != std::string::npos);
}
