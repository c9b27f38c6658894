#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "loris/model.hpp"
#include "loris/solver.hpp"

namespace loris {

// Parse failures throw Error(kParse) with a "<source>:<line>: " prefix.

/// First row: column types; second row: labels; then one row per
/// observation unit with `NA` for unobserved cells.
DataFrame read_data_csv(std::istream& in, const std::string& source = "data");
DataFrame read_data_csv(const std::string& path);
void write_data_csv(std::ostream& out, const DataFrame& data);

/// Header `q n p`, then one `k i j value` line per nonzero (0-based).
Dictionary read_dictionary(std::istream& in, const std::string& source = "dictionary");
Dictionary read_dictionary(const std::string& path);
void write_dictionary(std::ostream& out, const Dictionary& dict);

/// `k,alpha` rows.
void write_alpha_csv(std::ostream& out, const Eigen::VectorXd& alpha);
Eigen::VectorXd read_alpha_csv(std::istream& in, const std::string& source = "params");

/// `i,j,theta` rows over the target cells.
void write_theta_csv(std::ostream& out, const ModelParams& params);
/// Fills params.xi and params.theta.
void read_theta_csv(std::istream& in, ModelParams& params, const std::string& source = "theta");

/// `i,j` rows.
std::vector<Cell> read_cells_csv(std::istream& in, const std::string& source = "cells");

/// Columns t,F,loss,beta,R_ub,R,sigma1_grad,C_t,ms.
void write_trace_csv(std::ostream& out, const IterTrace& trace);

/// Shortest round-trip decimal form of x.
std::string format_double(double x);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace loris
