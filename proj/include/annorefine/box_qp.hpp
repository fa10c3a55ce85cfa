#pragma once

#include <vector>

#include <Eigen/Core>

namespace annorefine {

// minimize 0.5 x'Hx - b'x  subject to  lower <= x <= upper.
// Use +/-infinity for unbounded coordinates. H must be symmetric positive
// definite.
struct BoxQpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct BoxQpOptions {
  double tolerance = 1e-8;
  int max_iterations = 200;
};

enum class BoundSide { kLower, kUpper };

struct ActiveBound {
  int index = 0;
  BoundSide side = BoundSide::kLower;
  bool operator==(const ActiveBound&) const = default;
};

struct BoxQpResult {
  Eigen::VectorXd x;
  std::vector<ActiveBound> active;  // sorted by index
  bool converged = false;
  int iterations = 0;
  // Infinity norm of the projected gradient, scaled by
  // 1 + |b|_inf + |H|_inf |x|_inf.
  double kkt_residual = 0.0;
};

// Primal active-set method. Starts from the clipped unconstrained minimizer;
// blocking bounds and dropped bounds are chosen by lowest index on ties.
// Throws ConfigError on inconsistent dimensions, lower > upper, or an
// indefinite Hessian.
BoxQpResult SolveBoxQp(const BoxQpProblem& problem,
                       const BoxQpOptions& options = {});

// Projected-gradient KKT measure of `x`, scaled as in BoxQpResult.
double BoxQpKktResidual(const BoxQpProblem& problem, const Eigen::VectorXd& x);

}  // namespace annorefine
