#include "loris/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include "loris/error.hpp"

namespace loris {

namespace {

[[noreturn]] void fail(const std::string& source, int line, const std::string& msg) {
  throw Error(ErrorKind::kParse, source + ":" + std::to_string(line) + ": " + msg);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool parse_number(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

bool parse_int(std::string_view s, int& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

double number_or_fail(std::string_view s, const std::string& source, int line, const char* what) {
  double x = 0.0;
  if (!parse_number(s, x) || !std::isfinite(x)) fail(source, line, std::string("bad ") + what + " '" + std::string(s) + "'");
  return x;
}

int int_or_fail(std::string_view s, const std::string& source, int line, const char* what) {
  int x = 0;
  if (!parse_int(s, x)) fail(source, line, std::string("bad ") + what + " '" + std::string(s) + "'");
  return x;
}

bool blank(std::string_view s) { return trim(s).empty(); }

bool comment_or_blank(std::string_view s) {
  s = trim(s);
  return s.empty() || s.front() == '#';
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kParse, "cannot open '" + path + "'");
  return in;
}

// Reads `a,b,...` rows after a header whose first field is `first`.
template <typename Row>
void read_rows(std::istream& in, const std::string& source, std::size_t width, const char* first, Row&& row) {
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    auto fields = split(line, ',');
    if (!header) {
      header = true;
      if (fields.front() == first) continue;
    }
    if (fields.size() != width) {
      fail(source, lineno, "expected " + std::to_string(width) + " fields, got " + std::to_string(fields.size()));
    }
    row(fields, lineno);
  }
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kInvalidArgument, "cannot write '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorKind::kInvalidArgument, "write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Data frame

DataFrame read_data_csv(std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  std::vector<LinkKind> links;
  std::vector<std::string> labels;
  std::vector<Observation> entries;
  int row = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto fields = split(line, ',');
    if (links.empty()) {
      for (std::string_view f : fields) {
        try {
          links.push_back(parse_link(f));
        } catch (const Error& err) {
          fail(source, lineno, err.what());
        }
      }
      continue;
    }
    if (fields.size() != links.size()) {
      fail(source, lineno,
           "expected " + std::to_string(links.size()) + " fields, got " + std::to_string(fields.size()));
    }
    if (labels.empty()) {
      for (std::string_view f : fields) labels.emplace_back(f);
      continue;
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (fields[j] == "NA") continue;
      const double y = number_or_fail(fields[j], source, lineno, "value");
      if (!in_support(links[j], y)) {
        fail(source, lineno, "value " + std::string(fields[j]) + " in column " + std::to_string(j + 1) +
                                 " is outside the support of " + link_name(links[j]));
      }
      entries.push_back({row, static_cast<int>(j), y});
    }
    ++row;
  }
  if (links.empty()) fail(source, lineno, "missing column-type row");
  if (labels.empty()) fail(source, lineno, "missing label row");
  const int cols = static_cast<int>(links.size());
  return DataFrame(row, cols, std::move(links), std::move(entries), std::move(labels));
}

DataFrame read_data_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_data_csv(in, path);
}

void write_data_csv(std::ostream& out, const DataFrame& data) {
  for (int j = 0; j < data.cols(); ++j) out << (j ? "," : "") << link_name(data.link(j));
  out << '\n';
  for (int j = 0; j < data.cols(); ++j) {
    out << (j ? "," : "") << (data.labels().empty() ? "V" + std::to_string(j + 1) : data.labels()[j]);
  }
  out << '\n';
  auto it = data.entries().begin();
  for (int i = 0; i < data.rows(); ++i) {
    for (int j = 0; j < data.cols(); ++j) {
      if (j) out << ',';
      if (it != data.entries().end() && it->i == i && it->j == j) {
        out << format_double(it->y);
        ++it;
      } else {
        out << "NA";
      }
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Dictionary

Dictionary read_dictionary(std::istream& in, const std::string& source) {
  std::string line;
  int lineno = 0;
  int q = -1;
  int n = 0;
  int p = 0;
  std::vector<std::vector<DictEntry>> atoms;
  while (std::getline(in, line)) {
    ++lineno;
    if (comment_or_blank(line)) continue;
    const auto f = split_ws(line);
    if (q < 0) {
      if (f.size() != 3) fail(source, lineno, "header must be 'q n p'");
      q = int_or_fail(f[0], source, lineno, "q");
      n = int_or_fail(f[1], source, lineno, "n");
      p = int_or_fail(f[2], source, lineno, "p");
      if (q < 0 || n < 1 || p < 1) fail(source, lineno, "header values out of range");
      atoms.resize(static_cast<std::size_t>(q));
      continue;
    }
    if (f.size() != 4) fail(source, lineno, "expected 'k i j value'");
    const int k = int_or_fail(f[0], source, lineno, "k");
    const int i = int_or_fail(f[1], source, lineno, "i");
    const int j = int_or_fail(f[2], source, lineno, "j");
    const double v = number_or_fail(f[3], source, lineno, "value");
    if (k < 0 || k >= q) fail(source, lineno, "atom index out of range");
    if (i < 0 || i >= n || j < 0 || j >= p) fail(source, lineno, "cell out of range");
    atoms[static_cast<std::size_t>(k)].push_back({{i, j}, v});
  }
  if (q < 0) fail(source, lineno, "missing 'q n p' header");
  try {
    return Dictionary(n, p, std::move(atoms));
  } catch (const Error& err) {
    throw Error(ErrorKind::kParse, source + ": " + err.what());
  }
}

Dictionary read_dictionary(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_dictionary(in, path);
}

void write_dictionary(std::ostream& out, const Dictionary& dict) {
  out << dict.size() << ' ' << dict.rows() << ' ' << dict.cols() << '\n';
  for (int k = 0; k < dict.size(); ++k) {
    for (const DictEntry& d : dict.atom(k)) {
      out << k << ' ' << d.cell.i << ' ' << d.cell.j << ' ' << format_double(d.value) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Parameters and traces

void write_alpha_csv(std::ostream& out, const Eigen::VectorXd& alpha) {
  out << "k,alpha\n";
  for (Eigen::Index k = 0; k < alpha.size(); ++k) out << k << ',' << format_double(alpha[k]) << '\n';
}

Eigen::VectorXd read_alpha_csv(std::istream& in, const std::string& source) {
  std::vector<double> values;
  read_rows(in, source, 2, "k", [&](const auto& f, int line) {
    const int k = int_or_fail(f[0], source, line, "k");
    if (k != static_cast<int>(values.size())) fail(source, line, "atom indices must be 0, 1, 2, ...");
    values.push_back(number_or_fail(f[1], source, line, "alpha"));
  });
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void write_theta_csv(std::ostream& out, const ModelParams& params) {
  out << "i,j,theta\n";
  for (std::size_t x = 0; x < params.xi.size(); ++x) {
    out << params.xi[x].i << ',' << params.xi[x].j << ',' << format_double(params.theta[static_cast<Eigen::Index>(x)])
        << '\n';
  }
}

void read_theta_csv(std::istream& in, ModelParams& params, const std::string& source) {
  std::vector<std::pair<Cell, double>> rows;
  read_rows(in, source, 3, "i", [&](const auto& f, int line) {
    const int i = int_or_fail(f[0], source, line, "i");
    const int j = int_or_fail(f[1], source, line, "j");
    if (i < 0 || j < 0) fail(source, line, "negative cell index");
    rows.push_back({{i, j}, number_or_fail(f[2], source, line, "theta")});
  });
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  params.xi.clear();
  params.theta.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t x = 0; x < rows.size(); ++x) {
    if (x > 0 && rows[x - 1].first == rows[x].first) {
      throw Error(ErrorKind::kParse, source + ": duplicate cell (" + std::to_string(rows[x].first.i) + "," +
                                         std::to_string(rows[x].first.j) + ")");
    }
    params.xi.push_back(rows[x].first);
    params.theta[static_cast<Eigen::Index>(x)] = rows[x].second;
  }
}

std::vector<Cell> read_cells_csv(std::istream& in, const std::string& source) {
  std::vector<Cell> cells;
  read_rows(in, source, 2, "i", [&](const auto& f, int line) {
    const int i = int_or_fail(f[0], source, line, "i");
    const int j = int_or_fail(f[1], source, line, "j");
    if (i < 0 || j < 0) fail(source, line, "negative cell index");
    cells.push_back({i, j});
  });
  return cells;
}

void write_trace_csv(std::ostream& out, const IterTrace& trace) {
  out << "t,F,loss,beta,R_ub,R,sigma1_grad,C_t,ms\n";
  for (const IterRecord& r : trace) {
    out << r.t << ',' << format_double(r.F) << ',' << format_double(r.loss) << ',' << format_double(r.beta) << ','
        << format_double(r.R_ub) << ',' << format_double(r.R) << ',' << format_double(r.sigma1_grad) << ','
        << format_double(r.C_t) << ',' << format_double(r.ms) << '\n';
  }
}

}  // namespace loris
