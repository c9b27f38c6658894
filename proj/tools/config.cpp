#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "loris/error.hpp"
#include "loris/link.hpp"

namespace loris::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& where, const std::string& msg) {
  throw Error(ErrorKind::kParse, where + ": " + msg);
}

double to_double(const std::string& v, const std::string& where) {
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad(where, "expected a number, got '" + v + "'");
  return x;
}

long long to_integer(const std::string& v, const std::string& where) {
  long long x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad(where, "expected an integer, got '" + v + "'");
  return x;
}

int to_int(const std::string& v, const std::string& where) {
  const long long x = to_integer(v, where);
  if (x < INT32_MIN || x > INT32_MAX) bad(where, "integer out of range: " + v);
  return static_cast<int>(x);
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(where, "expected true/false, got '" + v + "'");
}

std::optional<double> number_or_auto(const std::string& v, const std::string& where) {
  if (v == "auto") return std::nullopt;
  return to_double(v, where);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

struct Key {
  std::string help;
  Setter set;
};

const std::map<std::string, Key>& table() {
  static const std::map<std::string, Key> keys = {
      {"data", {"data frame CSV", [](RunConfig& c, const std::string& v, const std::string&) { c.data = v; }}},
      {"dict", {"dictionary file", [](RunConfig& c, const std::string& v, const std::string&) { c.dict = v; }}},
      {"out", {"output directory", [](RunConfig& c, const std::string& v, const std::string&) { c.out = v; }}},
      {"params", {"directory with a previous fit", [](RunConfig& c, const std::string& v, const std::string&) { c.params = v; }}},
      {"targets", {"i,j list of extra target cells", [](RunConfig& c, const std::string& v, const std::string&) { c.targets = v; }}},
      {"truth", {"directory with truth_alpha.csv/truth_theta.csv", [](RunConfig& c, const std::string& v, const std::string&) { c.truth = v; }}},
      {"lambda_s", {"sparse penalty, number or auto", [](RunConfig& c, const std::string& v, const std::string& w) { c.lambda_S = number_or_auto(v, w); }}},
      {"lambda_l", {"nuclear-norm penalty, number or auto", [](RunConfig& c, const std::string& v, const std::string& w) { c.lambda_L = number_or_auto(v, w); }}},
      {"window_lo", {"curvature window lower end (auto penalties)", [](RunConfig& c, const std::string& v, const std::string& w) { c.window_lo = to_double(v, w); }}},
      {"window_hi", {"curvature window upper end (auto penalties)", [](RunConfig& c, const std::string& v, const std::string& w) { c.window_hi = to_double(v, w); }}},
      {"c_const", {"constant C in the auto lambda_L", [](RunConfig& c, const std::string& v, const std::string& w) { c.c_const = to_double(v, w); }}},
      {"gamma_subexp", {"sub-exponential constant in the auto lambda_S", [](RunConfig& c, const std::string& v, const std::string& w) { c.gamma_subexp = to_double(v, w); }}},
      {"a_box", {"box bound a (recorded and checked, never projected)", [](RunConfig& c, const std::string& v, const std::string& w) { c.a_box = to_double(v, w); }}},
      {"gamma_step", {"alpha step size, 0 = 1/sigma_alpha", [](RunConfig& c, const std::string& v, const std::string& w) { c.solver.gamma_step = to_double(v, w); }}},
      {"sigma_alpha", {"smoothness in alpha, 0 = derived", [](RunConfig& c, const std::string& v, const std::string& w) { c.solver.sigma_alpha = to_double(v, w); }}},
      {"sigma_theta", {"smoothness in Theta, 0 = derived", [](RunConfig& c, const std::string& v, const std::string& w) { c.solver.sigma_theta = to_double(v, w); }}},
      {"sigma_hat_theta", {"cross Lipschitz constant for C(t), 0 = default", [](RunConfig& c, const std::string& v, const std::string& w) { c.solver.sigma_hat_theta = to_double(v, w); }}},
      {"max_iters", {"iteration budget", [](RunConfig& c, const std::string& v, const std::string& w) { c.solver.max_iters = to_int(v, w); }}},
      {"tol", {"relative objective decrease tolerance", [](RunConfig& c, const std::string& v, const std::string& w) { c.solver.tol_rel_obj = to_double(v, w); }}},
      {"patience", {"small-decrease iterations before stopping", [](RunConfig& c, const std::string& v, const std::string& w) { c.solver.patience = to_int(v, w); }}},
      {"svd_delta", {"power-iteration relative accuracy", [](RunConfig& c, const std::string& v, const std::string& w) { c.solver.svd_delta = to_double(v, w); }}},
      {"svd_max_iters", {"power-iteration budget", [](RunConfig& c, const std::string& v, const std::string& w) { c.solver.svd_max_iters = to_int(v, w); }}},
      {"alpha_update", {"auto, proximal or exact", [](RunConfig& c, const std::string& v, const std::string& w) {
         try {
           c.solver.alpha_update = parse_alpha_update(v);
         } catch (const Error& e) {
           bad(w, e.what());
         }
       }}},
      {"polish_alpha", {"minimize over alpha after the last iteration", [](RunConfig& c, const std::string& v, const std::string& w) { c.solver.polish_alpha = to_bool(v, w); }}},
      {"seed", {"random seed", [](RunConfig& c, const std::string& v, const std::string& w) {
         const long long s = to_integer(v, w);
         if (s < 0) bad(w, "seed must be >= 0");
         c.solver.seed = static_cast<std::uint64_t>(s);
         c.synth.seed = static_cast<std::uint64_t>(s);
       }}},
      {"workers", {"number of simulated workers K", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.workers = to_int(v, w);
         if (c.workers < 1) bad(w, "workers must be >= 1");
       }}},
      {"partition", {"round_robin, by_row, by_block or random", [](RunConfig& c, const std::string& v, const std::string& w) {
         try {
           c.partition = parse_partition_strategy(v);
         } catch (const Error& e) {
           bad(w, e.what());
         }
       }}},
      {"n", {"synthetic rows", [](RunConfig& c, const std::string& v, const std::string& w) { c.synth.n = to_int(v, w); }}},
      {"p", {"synthetic columns", [](RunConfig& c, const std::string& v, const std::string& w) { c.synth.p = to_int(v, w); }}},
      {"group_size", {"cells per indicator atom", [](RunConfig& c, const std::string& v, const std::string& w) { c.synth.group_size = to_int(v, w); }}},
      {"rank", {"rank of Theta0", [](RunConfig& c, const std::string& v, const std::string& w) { c.synth.rank_r = to_int(v, w); }}},
      {"sparsity", {"fraction of active atoms", [](RunConfig& c, const std::string& v, const std::string& w) { c.synth.sparsity_frac = to_double(v, w); }}},
      {"alpha_scale", {"magnitude of active alpha0 entries", [](RunConfig& c, const std::string& v, const std::string& w) { c.synth.alpha_scale = to_double(v, w); }}},
      {"theta_scale", {"scale of Theta0, 0 = largest entry 1", [](RunConfig& c, const std::string& v, const std::string& w) { c.synth.theta_scale = to_double(v, w); }}},
      {"missing_frac", {"probability a cell is unobserved", [](RunConfig& c, const std::string& v, const std::string& w) { c.synth.missing_frac = to_double(v, w); }}},
      {"links", {"comma list of column links, repeated over columns", [](RunConfig& c, const std::string& v, const std::string& w) {
         try {
           c.synth.links = parse_links(v);
         } catch (const Error& e) {
           bad(w, e.what());
         }
       }}},
      {"sizes", {"bench sizes, e.g. 150x30,300x60", [](RunConfig& c, const std::string& v, const std::string& w) {
         try {
           c.sizes = parse_sizes(v);
         } catch (const Error& e) {
           bad(w, e.what());
         }
       }}},
      {"replicates", {"bench replicates per size", [](RunConfig& c, const std::string& v, const std::string& w) {
         c.replicates = to_int(v, w);
         if (c.replicates < 1) bad(w, "replicates must be >= 1");
       }}},
      {"reproducible", {"zero the wall-clock columns", [](RunConfig& c, const std::string& v, const std::string& w) { c.reproducible = to_bool(v, w); }}},
  };
  return keys;
}

}  // namespace

Penalties RunConfig::penalties(const DataFrame& data, const Dictionary& dict) const {
  Penalties pen;
  if (any_auto()) {
    if (!window_lo || !window_hi) {
      throw Error(ErrorKind::kInvalidArgument, "auto penalties need window_lo and window_hi");
    }
    if (!(*window_lo <= *window_hi)) throw Error(ErrorKind::kInvalidArgument, "window_lo must be <= window_hi");
    pen = theoretical_lambdas(data, dict, {*window_lo, *window_hi}, c_const, gamma_subexp);
  }
  if (lambda_S) pen.lambda_S = *lambda_S;
  if (lambda_L) pen.lambda_L = *lambda_L;
  if (a_box > 0.0 || !any_auto()) pen.a_box = a_box;
  pen.validate();
  return pen;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& where) {
  const auto it = table().find(key);
  if (it == table().end()) bad(where, "unknown key '" + key + "'");
  it->second.set(cfg, value, where);
}

void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInvalidArgument, "cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad(where, "expected 'key = value'");
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
}

const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const auto keys = [] {
    std::vector<std::pair<std::string, std::string>> v;
    for (const auto& [name, key] : table()) v.emplace_back(name, key.help);
    return v;
  }();
  return keys;
}

std::vector<BenchSize> parse_sizes(const std::string& text) {
  std::vector<BenchSize> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    const auto x = item.find('x');
    if (x == std::string::npos) throw Error(ErrorKind::kParse, "size '" + item + "' is not of the form NxP");
    BenchSize s;
    s.n = to_int(item.substr(0, x), "size");
    s.p = to_int(item.substr(x + 1), "size");
    if (s.n < 1 || s.p < 1) throw Error(ErrorKind::kParse, "size '" + item + "' must be positive");
    sizes.push_back(s);
  }
  if (sizes.empty()) throw Error(ErrorKind::kParse, "empty size list");
  return sizes;
}

std::vector<LinkKind> parse_links(const std::string& text) {
  std::vector<LinkKind> links;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) links.push_back(parse_link(trim(item)));
  if (links.empty()) throw Error(ErrorKind::kParse, "empty link list");
  return links;
}

}  // namespace loris::cli
