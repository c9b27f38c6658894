#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"
#include "loris/synth.hpp"

namespace loris::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitBudget = 2;
/// simulate-distributed only: the distributed run left the centralized
/// trajectory or sent an n x p message.
inline constexpr int kExitMismatch = 3;

// Each command writes its files under cfg.out and a short summary to `log`.
// User errors (bad files, bad settings) propagate as loris::Error; main()
// maps them to kExitUserError.
int cmd_fit(const RunConfig& cfg, std::ostream& log);
int cmd_impute(const RunConfig& cfg, std::ostream& log);
int cmd_synth(const RunConfig& cfg, std::ostream& log);
int cmd_bench(const RunConfig& cfg, std::ostream& log);
int cmd_validate(const RunConfig& cfg, std::ostream& log);
int cmd_simulate_distributed(const RunConfig& cfg, std::ostream& log);

struct BenchRow {
  BenchSize size;
  int replicate = 0;
  std::string method;
  double time_ms = 0.0;
  int iterations = 0;
  ErrorReport errors;
};

/// Seed of replicate r under base seed s.
std::uint64_t replicate_seed(std::uint64_t seed, int r);

/// One replicate at one size: `loris` and `two_step`, plus `loris_gaussian`
/// (every column fitted with the Gaussian link) when the synthetic frame has
/// non-Gaussian columns.
std::vector<BenchRow> bench_replicate(const RunConfig& cfg, BenchSize size, int replicate);
std::vector<BenchRow> run_bench(const RunConfig& cfg);
/// size,replicate,method,time_ms,iterations,theta_err,alpha_err,gaussian_mse,poisson_mse,bernoulli_err
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace loris::cli
