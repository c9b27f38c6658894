#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "loris/error.hpp"

namespace {

using loris::cli::RunConfig;

// Raw flag values, applied over the config file in a fixed order.
struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> direct;
  bool reproducible = false;
};

void add_common(CLI::App* sub, Flags& flags) {
  sub->add_option("--config", flags.config, "key = value settings file");
  sub->add_option("--set", flags.sets, "override one setting, key=value (repeatable)");
  auto direct = [&flags, sub](const char* flag, const char* key, const char* help) {
    sub->add_option_function<std::string>(
        flag, [&flags, key](const std::string& v) { flags.direct.emplace_back(key, v); }, help);
  };
  direct("--data", "data", "data frame CSV");
  direct("--dict", "dict", "dictionary file");
  direct("--out", "out", "output directory");
  direct("--lambda-s", "lambda_s", "sparse penalty (number or auto)");
  direct("--lambda-l", "lambda_l", "nuclear-norm penalty (number or auto)");
  direct("--workers", "workers", "number of simulated workers K");
  direct("--seed", "seed", "random seed");
  direct("--max-iters", "max_iters", "iteration budget");
  direct("--tol", "tol", "relative objective decrease tolerance");
  direct("--targets", "targets", "i,j list of cells to impute / add to the target set");
  direct("--params", "params", "directory of a previous fit (impute)");
  direct("--truth", "truth", "directory with truth_alpha.csv and truth_theta.csv (validate)");
  sub->add_flag("--reproducible", flags.reproducible, "write zero wall-clock times");
}

RunConfig build_config(const Flags& flags) {
  RunConfig cfg;
  if (!flags.config.empty()) loris::cli::load_config_file(cfg, flags.config);
  for (const std::string& s : flags.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw loris::Error(loris::ErrorKind::kParse, "--set expects key=value, got " + s);
    loris::cli::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1), "--set");
  }
  for (const auto& [key, value] : flags.direct) loris::cli::apply_setting(cfg, key, value, "--" + key);
  if (flags.reproducible) cfg.reproducible = true;
  return cfg;
}

std::string footer() {
  std::string text =
      "Exit codes: 0 success (fit: converged), 2 iteration budget exhausted,\n"
      "1 user error (parse, validation, missing files), 3 simulate-distributed\n"
      "trajectory mismatch.\n\nConfig keys:\n";
  for (const auto& [key, help] : loris::cli::config_keys()) text += "  " + key + ": " + help + "\n";
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank interaction plus sparse effects for heterogeneous data frames"};
  app.footer(footer());
  app.require_subcommand(1);

  using Command = std::function<int(const RunConfig&, std::ostream&)>;
  const std::vector<std::tuple<const char*, const char*, Command>> commands = {
      {"fit", "fit the model to a data frame", loris::cli::cmd_fit},
      {"impute", "predict means at target cells from a fit", loris::cli::cmd_impute},
      {"synth", "generate a synthetic instance", loris::cli::cmd_synth},
      {"bench", "compare against the two-step baseline on synthetic data", loris::cli::cmd_bench},
      {"validate", "check the dictionary and model assumptions", loris::cli::cmd_validate},
      {"simulate-distributed", "run the worker/server simulation next to the centralized fit",
       loris::cli::cmd_simulate_distributed},
  };

  Flags flags;
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, flags);
    subs.emplace_back(sub, fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : loris::cli::kExitUserError;
  }

  try {
    const RunConfig cfg = build_config(flags);
    for (const auto& [sub, fn] : subs) {
      if (sub->parsed()) return fn(cfg, std::cout);
    }
  } catch (const loris::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return loris::cli::kExitUserError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return loris::cli::kExitUserError;
  }
  return loris::cli::kExitUserError;
}
