#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <doctest.h>

#include "commands.hpp"
#include "config.hpp"
#include "loris/error.hpp"
#include "loris/io.hpp"

using namespace loris;
using namespace loris::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::absolute("data");

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("loris_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code = -1;
  std::string out;
};

// Runs the loris binary with `args`; stdout and stderr land in `out`.
Run run(const std::string& args, const fs::path& dir) {
  const char* bin = std::getenv("LORIS_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "LORIS_BIN is not set");
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string("\"") + bin + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(log.string());
  return r;
}

std::string path(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("settings") {
  RunConfig cfg;
  apply_setting(cfg, "lambda_s", "0.5", "x");
  apply_setting(cfg, "lambda_l", "auto", "x");
  CHECK(cfg.lambda_S == 0.5);
  CHECK(!cfg.lambda_L);
  CHECK(cfg.any_auto());
  apply_setting(cfg, "seed", "17", "x");
  CHECK(cfg.solver.seed == 17);
  CHECK(cfg.synth.seed == 17);
  apply_setting(cfg, "links", "gaussian,bernoulli,poisson:0.5", "x");
  REQUIRE(cfg.synth.links.size() == 3);
  CHECK(cfg.synth.links[2] == LinkKind::poisson(0.5));
  apply_setting(cfg, "partition", "by_row", "x");
  CHECK(cfg.partition == PartitionStrategy::kByRow);

  const auto sizes = parse_sizes("150x30,300x60");
  REQUIRE(sizes.size() == 2);
  CHECK(sizes[1].n == 300);
  CHECK(sizes[1].p == 60);
  CHECK_THROWS_AS(parse_sizes("150by30"), Error);

  try {
    apply_setting(cfg, "lamda_s", "1", "run.cfg:3");
    FAIL("unknown key accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("run.cfg:3: ") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_setting(cfg, "max_iters", "ten", "x"), Error);
  for (const auto& [key, help] : config_keys()) CHECK(!help.empty());
}

TEST_CASE("config file") {
  const fs::path dir = scratch("config");
  {
    std::ofstream f(dir / "run.cfg");
    f << "# comment\nlambda_s = 0.25\n\nmax_iters = 40  # trailing\n";
  }
  RunConfig cfg;
  load_config_file(cfg, (dir / "run.cfg").string());
  CHECK(cfg.lambda_S == 0.25);
  CHECK(cfg.solver.max_iters == 40);
  {
    std::ofstream f(dir / "bad.cfg");
    f << "lambda_s = 1\nnot a setting\n";
  }
  try {
    load_config_file(cfg, (dir / "bad.cfg").string());
    FAIL("bad line accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("bad.cfg:2") != std::string::npos);
  }
}

TEST_CASE("auto penalties need a window") {
  const DataFrame df = read_data_csv((kData / "tiny/data.csv").string());
  const Dictionary dict = read_dictionary((kData / "tiny/dict.txt").string());
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.penalties(df, dict), Error);
  cfg.window_lo = -1.0;
  cfg.window_hi = 1.0;
  const Penalties auto_pen = cfg.penalties(df, dict);
  CHECK(auto_pen.lambda_S > 0.0);
  CHECK(auto_pen.lambda_L > 0.0);
  cfg.lambda_L = 3.0;
  const Penalties mixed = cfg.penalties(df, dict);
  CHECK(mixed.lambda_L == 3.0);
  CHECK(mixed.lambda_S == auto_pen.lambda_S);
}

TEST_CASE("fit and impute on the tiny frame") {
  const fs::path dir = scratch("tiny");
  const std::string io = "--data " + path(kData / "tiny/data.csv") + " --dict " + path(kData / "tiny/dict.txt");
  Run r = run("fit " + io + " --lambda-s 0.1 --lambda-l 1 --out " + path(dir / "fit") + " --reproducible", dir);
  CHECK_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.find("lambda_L = 1\n") != std::string::npos);
  CHECK(r.out.find("(auto)") == std::string::npos);
  CHECK(read_file((dir / "fit/trace.csv").string()).rfind("t,F,loss,beta,R_ub,R,sigma1_grad,C_t,ms\n", 0) == 0);
  {
    std::istringstream trace(read_file((dir / "fit/trace.csv").string()));
    std::string line;
    std::getline(trace, line);
    double prev = std::numeric_limits<double>::infinity();
    while (std::getline(trace, line)) {
      const double F = std::stod(line.substr(line.find(',') + 1));
      CHECK(F <= prev + 1e-10 * (1.0 + std::abs(prev)));
      prev = F;
    }
  }
  const std::string opt = read_file((dir / "fit/optimality.txt").string());
  CHECK(opt.find("converged = true") != std::string::npos);

  r = run("impute " + io + " --params " + path(dir / "fit") + " --out " + path(dir / "imp"), dir);
  CHECK_MESSAGE(r.code == 0, r.out);
  const std::string imputed = read_file((dir / "imp/imputed.csv").string());
  CHECK(imputed.rfind("i,j,link,mean,label\n", 0) == 0);
  CHECK(imputed.find("1,2,poisson,") != std::string::npos);
  CHECK(imputed.find("2,0,gaussian,") != std::string::npos);

  // identical inputs give byte-identical outputs
  r = run("fit " + io + " --lambda-s 0.1 --lambda-l 1 --out " + path(dir / "again") + " --reproducible", dir);
  CHECK(read_file((dir / "fit/theta.csv").string()) == read_file((dir / "again/theta.csv").string()));
  CHECK(read_file((dir / "fit/trace.csv").string()) == read_file((dir / "again/trace.csv").string()));

  // an iteration budget of 1 is reported with exit code 2
  r = run("fit " + io + " --lambda-s 0.1 --lambda-l 1 --max-iters 1 --out " + path(dir / "short"), dir);
  CHECK(r.code == kExitBudget);

  // auto penalties are echoed
  r = run("fit " + io + " --set window_lo=-1 --set window_hi=1 --out " + path(dir / "auto"), dir);
  CHECK(r.code != kExitUserError);
  CHECK(r.out.find("(auto)") != std::string::npos);
}

TEST_CASE("user errors exit with 1, warnings with 0") {
  const fs::path dir = scratch("errors");
  const std::string data = "--data " + path(kData / "tiny/data.csv");
  Run r = run("fit " + data + " --lambda-s 1 --lambda-l 1 --out " + path(dir), dir);
  CHECK(r.code == kExitUserError);
  CHECK(r.out.find("missing --dict") != std::string::npos);

  r = run("fit " + data + " --dict " + path(kData / "nope.txt") + " --lambda-s 1 --lambda-l 1", dir);
  CHECK(r.code == kExitUserError);

  r = run("fit " + data + " --dict " + path(kData / "tiny/dict.txt") + " --set lamda_s=1", dir);
  CHECK(r.code == kExitUserError);

  r = run("validate " + data + " --dict " + path(kData / "bad_dict.txt"), dir);
  CHECK(r.code == kExitUserError);
  CHECK(r.out.find("[FAIL]") != std::string::npos);

  r = run("validate " + data + " --dict " + path(kData / "singular_dict.txt"), dir);
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("[WARN]") != std::string::npos);

  r = run("validate " + data + " --dict " + path(kData / "tiny/dict.txt"), dir);
  CHECK_MESSAGE(r.code == kExitOk, r.out);

  r = run("frobnicate", dir);
  CHECK(r.code == kExitUserError);
}

TEST_CASE("synth, validate and distributed simulation") {
  const fs::path dir = scratch("synth");
  Run r = run("synth --set n=20 --set p=10 --set missing_frac=0.2 --set links=gaussian,bernoulli,poisson --seed 4 "
              "--out " + path(dir / "inst"),
              dir);
  REQUIRE_MESSAGE(r.code == 0, r.out);
  for (const char* f : {"data.csv", "dict.txt", "truth_alpha.csv", "truth_theta.csv", "heldout.csv"})
    CHECK(fs::exists(dir / "inst" / f));

  const std::string io = "--data " + path(dir / "inst/data.csv") + " --dict " + path(dir / "inst/dict.txt");
  r = run("validate " + io + " --truth " + path(dir / "inst"), dir);
  CHECK_MESSAGE(r.code == 0, r.out);

  r = run("simulate-distributed " + io + " --lambda-s 0.3 --lambda-l 1 --workers 4 --out " + path(dir / "sim"), dir);
  CHECK_MESSAGE(r.code == 0, r.out);
  const std::string summary = read_file((dir / "sim/summary.txt").string());
  CHECK(summary.find("max_abs_F_difference = 0") != std::string::npos);
  CHECK(read_file((dir / "sim/roundlog.csv").string()).rfind("t,phase,direction,bytes,worker\n", 0) == 0);

  r = run("fit " + io + " --lambda-s 0.3 --lambda-l 1 --workers 3 --out " + path(dir / "dfit"), dir);
  CHECK(r.code != kExitUserError);
  CHECK(fs::exists(dir / "dfit/roundlog.csv"));
}

TEST_CASE("bench rows and reproducibility") {
  const fs::path dir = scratch("bench");
  const std::string args =
      "bench --set sizes=10x5,20x5 --set replicates=2 --set links=gaussian,bernoulli --set lambda_s=0.2 "
      "--set lambda_l=1 --set max_iters=200 --reproducible --out ";
  Run r = run(args + path(dir / "a"), dir);
  REQUIRE_MESSAGE(r.code == 0, r.out);
  r = run(args + path(dir / "b"), dir);
  REQUIRE(r.code == 0);
  const std::string a = read_file((dir / "a/bench.csv").string());
  CHECK(a == read_file((dir / "b/bench.csv").string()));

  std::istringstream lines(a);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "size,replicate,method,time_ms,iterations,theta_err,alpha_err,gaussian_mse,poisson_mse,bernoulli_err");
  int rows = 0;
  int two_step = 0;
  while (std::getline(lines, line)) {
    ++rows;
    two_step += line.find(",two_step,") != std::string::npos;
    CHECK(line.find(",0,") != std::string::npos);  // zeroed time
  }
  // 2 sizes x 2 replicates x {loris, loris_gaussian, two_step}
  CHECK(rows == 12);
  CHECK(two_step == 4);

  // replicate seeds are distinct and stable
  CHECK(replicate_seed(1, 0) != replicate_seed(1, 1));
  CHECK(replicate_seed(1, 0) == replicate_seed(1, 0));
}
