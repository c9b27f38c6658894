#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loris/distributed.hpp"
#include "loris/solver.hpp"
#include "loris/synth.hpp"

namespace loris::cli {

struct BenchSize {
  int n = 0;
  int p = 0;
};

/// Everything a subcommand may read. Filled from a `key = value` file, then
/// from command-line flags (later settings win).
struct RunConfig {
  std::string data;
  std::string dict;
  std::string out = ".";
  std::string params;   ///< directory holding params.csv / theta.csv (impute)
  std::string targets;  ///< optional `i,j` cell list
  std::string truth;    ///< optional directory with truth_alpha.csv / truth_theta.csv (validate)

  // Penalties: a number, or unset = `auto` (theoretical values).
  std::optional<double> lambda_S;
  std::optional<double> lambda_L;
  std::optional<double> window_lo;
  std::optional<double> window_hi;
  double c_const = 1.0;
  double gamma_subexp = 1.0;
  double a_box = 0.0;

  SolverConfig solver;
  int workers = 1;
  PartitionStrategy partition = PartitionStrategy::kRoundRobin;

  SynthSpec synth;
  std::vector<BenchSize> sizes;
  int replicates = 10;
  /// Zero every wall-clock column so outputs are byte-identical across runs.
  bool reproducible = false;

  /// Penalties for a data frame: explicit values where given, theoretical
  /// ones otherwise. Throws Error(kInvalidArgument) when a penalty is `auto`
  /// and the curvature window is missing.
  Penalties penalties(const DataFrame& data, const Dictionary& dict) const;
  bool any_auto() const { return !lambda_S || !lambda_L; }
};

/// Applies one setting; `where` prefixes error messages.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& where);

/// Reads `key = value` lines ('#' starts a comment). Unknown keys are
/// errors.
void load_config_file(RunConfig& cfg, const std::string& path);

/// Every accepted key, for --help.
const std::vector<std::pair<std::string, std::string>>& config_keys();

std::vector<BenchSize> parse_sizes(const std::string& text);
std::vector<LinkKind> parse_links(const std::string& text);

}  // namespace loris::cli
