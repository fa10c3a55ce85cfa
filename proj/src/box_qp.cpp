#include "annorefine/box_qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "annorefine/errors.hpp"

namespace annorefine {
namespace {

enum class VarState { kFree, kAtLower, kAtUpper };

double Scale(const BoxQpProblem& p, const Eigen::VectorXd& x) {
  const double h_norm = p.hessian.cwiseAbs().rowwise().sum().maxCoeff();
  const double x_norm = x.size() ? x.cwiseAbs().maxCoeff() : 0.0;
  const double b_norm = p.linear.size() ? p.linear.cwiseAbs().maxCoeff() : 0.0;
  return 1.0 + b_norm + h_norm * x_norm;
}

double ProjectedGradientNorm(const BoxQpProblem& p, const Eigen::VectorXd& x,
                             const std::vector<VarState>& state) {
  const Eigen::VectorXd g = p.hessian * x - p.linear;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double r = 0.0;
    switch (state[i]) {
      case VarState::kFree: r = std::abs(g[i]); break;
      case VarState::kAtLower: r = std::max(0.0, -g[i]); break;
      case VarState::kAtUpper: r = std::max(0.0, g[i]); break;
    }
    // Primal infeasibility counts too.
    r = std::max({r, p.lower[i] - x[i], x[i] - p.upper[i]});
    worst = std::max(worst, r);
  }
  return worst;
}

Eigen::VectorXd SolveSpd(const Eigen::MatrixXd& h, const Eigen::VectorXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("QP Hessian is not positive definite");
  }
  Eigen::VectorXd x = llt.solve(rhs);
  x += llt.solve(rhs - h * x);  // one step of iterative refinement
  return x;
}

void CheckDimensions(const BoxQpProblem& p) {
  const Eigen::Index n = p.hessian.rows();
  if (p.hessian.cols() != n || p.linear.size() != n || p.lower.size() != n ||
      p.upper.size() != n) {
    throw ConfigError("QP dimensions are inconsistent");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p.lower[i] > p.upper[i]) {
      throw ConfigError("QP bounds are infeasible (lower > upper)");
    }
  }
}

}  // namespace

double BoxQpKktResidual(const BoxQpProblem& problem, const Eigen::VectorXd& x) {
  CheckDimensions(problem);
  const Eigen::VectorXd g = problem.hessian * x - problem.linear;
  std::vector<VarState> state(x.size(), VarState::kFree);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] <= problem.lower[i] && g[i] >= 0.0) state[i] = VarState::kAtLower;
    if (x[i] >= problem.upper[i] && g[i] <= 0.0) state[i] = VarState::kAtUpper;
  }
  return ProjectedGradientNorm(problem, x, state) / Scale(problem, x);
}

BoxQpResult SolveBoxQp(const BoxQpProblem& problem, const BoxQpOptions& options) {
  CheckDimensions(problem);
  const Eigen::Index n = problem.hessian.rows();
  BoxQpResult result;

  Eigen::VectorXd x = SolveSpd(problem.hessian, problem.linear);
  std::vector<VarState> state(n, VarState::kFree);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[i] < problem.lower[i]) {
      x[i] = problem.lower[i];
      state[i] = VarState::kAtLower;
    } else if (x[i] > problem.upper[i]) {
      x[i] = problem.upper[i];
      state[i] = VarState::kAtUpper;
    }
  }

  bool optimal = std::none_of(state.begin(), state.end(), [](VarState s) {
    return s != VarState::kFree;
  });
  int iter = 0;
  while (!optimal && iter < options.max_iterations) {
    ++iter;
    std::vector<Eigen::Index> free_idx, fixed_idx;
    for (Eigen::Index i = 0; i < n; ++i) {
      (state[i] == VarState::kFree ? free_idx : fixed_idx).push_back(i);
    }

    // Minimizer on the current face.
    Eigen::VectorXd target = x;
    if (!free_idx.empty()) {
      Eigen::VectorXd rhs = problem.linear(free_idx);
      if (!fixed_idx.empty()) {
        rhs -= problem.hessian(free_idx, fixed_idx) * x(fixed_idx);
      }
      target(free_idx) = SolveSpd(problem.hessian(free_idx, free_idx), rhs);
    }
    const Eigen::VectorXd step = target - x;
    const double step_norm = step.size() ? step.cwiseAbs().maxCoeff() : 0.0;

    if (step_norm <= 1e-14 * (1.0 + x.cwiseAbs().maxCoeff())) {
      x = target;
      const Eigen::VectorXd g = problem.hessian * x - problem.linear;
      const double threshold = options.tolerance * Scale(problem, x);
      Eigen::Index drop = -1;
      double most_negative = -threshold;
      for (Eigen::Index i : fixed_idx) {
        const double multiplier = state[i] == VarState::kAtLower ? g[i] : -g[i];
        if (multiplier < most_negative) {
          most_negative = multiplier;
          drop = i;
        }
      }
      if (drop < 0) {
        optimal = true;
      } else {
        state[drop] = VarState::kFree;
      }
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    VarState blocking_side = VarState::kFree;
    for (Eigen::Index i : free_idx) {
      double limit = std::numeric_limits<double>::infinity();
      VarState side = VarState::kFree;
      if (step[i] < 0.0 && std::isfinite(problem.lower[i])) {
        limit = (problem.lower[i] - x[i]) / step[i];
        side = VarState::kAtLower;
      } else if (step[i] > 0.0 && std::isfinite(problem.upper[i])) {
        limit = (problem.upper[i] - x[i]) / step[i];
        side = VarState::kAtUpper;
      }
      if (limit < alpha) {  // strict: lowest index wins ties
        alpha = std::max(limit, 0.0);
        blocking = i;
        blocking_side = side;
      }
    }
    x += alpha * step;
    if (blocking >= 0) {
      state[blocking] = blocking_side;
      x[blocking] = blocking_side == VarState::kAtLower ? problem.lower[blocking]
                                                        : problem.upper[blocking];
    }
  }

  // Clamp away round-off on bounded coordinates.
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = std::clamp(x[i], problem.lower[i], problem.upper[i]);
  }

  result.x = x;
  result.iterations = iter;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (state[i] == VarState::kAtLower) result.active.push_back({int(i), BoundSide::kLower});
    if (state[i] == VarState::kAtUpper) result.active.push_back({int(i), BoundSide::kUpper});
  }
  result.kkt_residual = ProjectedGradientNorm(problem, x, state) / Scale(problem, x);
  result.converged = optimal && result.kkt_residual <= options.tolerance;
  return result;
}

}  // namespace annorefine
