#pragma once

#include <Eigen/Core>

#include <functional>

namespace pressfit::gp {

struct LbfgsOptions {
  int max_iterations = 200;
  int history = 8;
  double gradient_tolerance = 1e-6;
  double function_tolerance = 1e-10;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
};

/// Objective returns f(x) and writes df/dx into its second argument.
using Objective = std::function<double(const Eigen::VectorXd &, Eigen::VectorXd &)>;

/// Limited-memory BFGS minimization restricted to the box [lower, upper].
/// Iterates are projected onto the box; the quasi-Newton direction is built
/// over the free variables only. A non-finite objective is treated as +inf.
LbfgsResult lbfgs_minimize(const Objective &f, Eigen::VectorXd x0, const Eigen::VectorXd &lower,
                           const Eigen::VectorXd &upper, const LbfgsOptions &options = {});

} // namespace pressfit::gp
