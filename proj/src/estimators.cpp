#include "annorefine/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <fmt/format.h>

#include "annorefine/errors.hpp"

namespace annorefine {
namespace {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

void CheckCovariance(const Mat2& m, const char* name) {
  if (!m.allFinite()) throw ConfigError(fmt::format("{} has non-finite entries", name));
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ConfigError(fmt::format("{} must be symmetric", name));
  }
  Eigen::LLT<Mat2> llt(m);
  if (llt.info() != Eigen::Success || m.determinant() <= 0.0) {
    throw ConfigError(fmt::format("{} must be positive definite", name));
  }
}

Mat2 TransitionMatrix(double dt) {
  Mat2 a;
  a << 1.0, dt, 0.0, 1.0;
  return a;
}

Vec2 InputOffset(double accel, double dt) {
  return {0.5 * accel * dt * dt, accel * dt};
}

void CheckSeries(const MeasurementSeries& y, std::size_t min_size) {
  y.Validate();
  if (y.size() < min_size) {
    throw DegenerateTrackError(fmt::format(
        "estimator needs at least {} measurements, got {}", min_size, y.size()));
  }
}

Vec2 ToVec(const KinematicState& x) { return {x.d, x.s}; }
KinematicState ToState(const Vec2& v) { return {v[0], v[1]}; }

MeasurementSeries Slice(const MeasurementSeries& y, std::size_t begin,
                        std::size_t end) {
  MeasurementSeries out;
  out.delta_t = y.delta_t;
  out.d.assign(y.d.begin() + begin, y.d.begin() + end);
  out.headings.assign(y.headings.begin() + begin, y.headings.begin() + end);
  out.times.assign(y.times.begin() + begin, y.times.begin() + end);
  return out;
}

// Normal equations of the weighted least-squares objective over the stacked
// states z = [d0, s0, d1, s1, ...].
BoxQpProblem AssembleWindow(const MeasurementSeries& y, const EstimatorConfig& cfg,
                            const Prior& prior) {
  const std::size_t n = y.size();
  const Eigen::Index dim = static_cast<Eigen::Index>(2 * n);
  BoxQpProblem qp;
  qp.hessian = Eigen::MatrixXd::Zero(dim, dim);
  qp.linear = Eigen::VectorXd::Zero(dim);

  const Mat2 psi_inv = cfg.psi.inverse();
  qp.hessian.topLeftCorner<2, 2>() += psi_inv;
  qp.linear.head<2>() += psi_inv * ToVec(prior.x_tilde);

  const double omega_inv = 1.0 / cfg.omega;
  for (std::size_t i = 0; i < n; ++i) {
    qp.hessian(2 * i, 2 * i) += omega_inv;
    qp.linear[2 * i] += omega_inv * y.d[i];
  }

  // Process residual x[i+1] - A x[i] - c = [-A  I] [x[i]; x[i+1]] - c.
  const Mat2 q_inv = cfg.q.inverse();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dt = y.times[i + 1] - y.times[i];
    Eigen::Matrix<double, 2, 4> jac;
    jac.leftCols<2>() = -TransitionMatrix(dt);
    jac.rightCols<2>() = Mat2::Identity();
    const Vec2 offset = InputOffset(cfg.u_nominal, dt);
    qp.hessian.block<4, 4>(2 * i, 2 * i) += jac.transpose() * q_inv * jac;
    qp.linear.segment<4>(2 * i) += jac.transpose() * q_inv * offset;
  }

  const double inf = std::numeric_limits<double>::infinity();
  qp.lower = Eigen::VectorXd::Constant(dim, -inf);
  qp.upper = Eigen::VectorXd::Constant(dim, inf);
  if (cfg.speed_bounds) {
    for (std::size_t i = 0; i < n; ++i) {
      qp.lower[2 * i + 1] = cfg.speed_bounds->min;
      qp.upper[2 * i + 1] = cfg.speed_bounds->max;
    }
  }
  return qp;
}

struct KalmanPass {
  std::vector<Vec2> predicted, filtered;
  std::vector<Mat2> predicted_cov, filtered_cov;
};

KalmanPass RunKalman(const MeasurementSeries& y, const EstimatorConfig& cfg,
                     const Prior& prior) {
  KalmanPass pass;
  const std::size_t n = y.size();
  Vec2 x = ToVec(prior.x_tilde);
  Mat2 p = cfg.psi;
  const Eigen::RowVector2d h(1.0, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      const double dt = y.times[k] - y.times[k - 1];
      const Mat2 a = TransitionMatrix(dt);
      x = a * x + InputOffset(cfg.u_nominal, dt);
      p = a * p * a.transpose() + cfg.q;
    }
    pass.predicted.push_back(x);
    pass.predicted_cov.push_back(p);

    const double innovation = y.d[k] - h * x;
    const double s = (h * p * h.transpose())(0, 0) + cfg.omega;
    const Vec2 gain = p * h.transpose() / s;
    x += gain * innovation;
    // Joseph form keeps p symmetric PD when omega is tiny.
    const Mat2 i_kh = Mat2::Identity() - gain * h;
    p = i_kh * p * i_kh.transpose() + gain * cfg.omega * gain.transpose();
    pass.filtered.push_back(x);
    pass.filtered_cov.push_back(p);
  }
  return pass;
}

StateEstimate MakeEstimate(const MeasurementSeries& y, const EstimatorConfig& cfg,
                           const Prior& prior, const std::vector<Vec2>& xs) {
  StateEstimate est;
  est.times = y.times;
  for (const Vec2& v : xs) est.states.push_back(ToState(v));
  est.objective = MheObjective(y, cfg, prior, est.states);
  return est;
}

}  // namespace

void EstimatorConfig::Validate() const {
  CheckCovariance(q, "q");
  CheckCovariance(psi, "psi");
  if (!(omega > 0.0) || !std::isfinite(omega)) {
    throw ConfigError("omega must be a positive finite scalar");
  }
  if (horizon && *horizon < 2) throw ConfigError("horizon must be >= 2");
  if (!std::isfinite(u_nominal)) throw ConfigError("u_nominal must be finite");
  if (speed_bounds && !(speed_bounds->min < speed_bounds->max)) {
    throw ConfigError("speed_bounds requires s_min < s_max");
  }
  if (!(solver_tol > 0.0)) throw ConfigError("solver_tol must be positive");
  if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
}

Prior DefaultPrior(const MeasurementSeries& y) {
  CheckSeries(y, 2);
  return {{y.d[0], (y.d[1] - y.d[0]) / (y.times[1] - y.times[0])}};
}

std::vector<double> StateEstimate::speeds() const {
  std::vector<double> out;
  for (const auto& x : states) out.push_back(x.s);
  return out;
}

std::vector<double> StateEstimate::distances() const {
  std::vector<double> out;
  for (const auto& x : states) out.push_back(x.d);
  return out;
}

double MheObjective(const MeasurementSeries& y, const EstimatorConfig& cfg,
                    const Prior& prior,
                    const std::vector<KinematicState>& states) {
  if (states.size() != y.size()) {
    throw DataError("state and measurement counts differ");
  }
  if (states.empty()) return 0.0;
  const Vec2 arrival = ToVec(states.front()) - ToVec(prior.x_tilde);
  double j = arrival.dot(cfg.psi.inverse() * arrival);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y.d[i] - Measure(states[i]);
    j += r * r / cfg.omega;
  }
  const Mat2 q_inv = cfg.q.inverse();
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    const double dt = y.times[i + 1] - y.times[i];
    const Vec2 r = ToVec(states[i + 1]) -
                   ToVec(Transition(states[i], cfg.u_nominal, dt));
    j += r.dot(q_inv * r);
  }
  return j;
}

StateEstimate MheSolve(const MeasurementSeries& y, const EstimatorConfig& cfg,
                       const Prior& prior) {
  cfg.Validate();
  CheckSeries(y, 2);
  const BoxQpProblem qp = AssembleWindow(y, cfg, prior);
  const BoxQpResult sol =
      SolveBoxQp(qp, {.tolerance = cfg.solver_tol, .max_iterations = cfg.max_iter});

  std::vector<Vec2> xs;
  for (std::size_t i = 0; i < y.size(); ++i) xs.push_back(sol.x.segment<2>(2 * i));
  StateEstimate est = MakeEstimate(y, cfg, prior, xs);
  est.converged = sol.converged;
  est.kkt_residual = sol.kkt_residual;
  for (const ActiveBound& b : sol.active) {
    est.active_constraints.push_back({b.index / 2, b.side});
  }
  return est;
}

StateEstimate MheReceding(const MeasurementSeries& y, const EstimatorConfig& cfg,
                          const Prior& prior) {
  cfg.Validate();
  CheckSeries(y, 2);
  const std::size_t n = y.size();
  const std::size_t window = cfg.horizon ? static_cast<std::size_t>(*cfg.horizon) : n;
  if (window > n) {
    throw ConfigError(fmt::format("horizon {} exceeds series length {}", window, n));
  }

  StateEstimate out;
  out.times = y.times;
  out.states.resize(n);
  out.objective = 0.0;
  out.converged = true;

  Prior window_prior = prior;
  StateEstimate previous;
  for (std::size_t end = window; end <= n; ++end) {
    const std::size_t begin = end - window;
    if (end > window) {
      // Previous window started at begin - 1, so its state at begin is index 1.
      window_prior = Prior{previous.states[1]};
    }
    StateEstimate est = MheSolve(Slice(y, begin, end), cfg, window_prior);
    out.objective += est.objective;
    out.converged = out.converged && est.converged;
    out.kkt_residual = std::max(out.kkt_residual, est.kkt_residual);

    const std::size_t first_reported = end == window ? 0 : window - 1;
    for (std::size_t i = first_reported; i < window; ++i) {
      out.states[begin + i] = est.states[i];
    }
    for (const ActiveSpeedBound& b : est.active_constraints) {
      if (static_cast<std::size_t>(b.index) >= first_reported) {
        out.active_constraints.push_back({static_cast<int>(begin) + b.index, b.side});
      }
    }
    previous = std::move(est);
  }
  return out;
}

StateEstimate KfFilter(const MeasurementSeries& y, const EstimatorConfig& cfg,
                       const Prior& prior) {
  cfg.Validate();
  CheckSeries(y, 1);
  return MakeEstimate(y, cfg, prior, RunKalman(y, cfg, prior).filtered);
}

StateEstimate RtsSmooth(const MeasurementSeries& y, const EstimatorConfig& cfg,
                        const Prior& prior) {
  cfg.Validate();
  CheckSeries(y, 1);
  const KalmanPass pass = RunKalman(y, cfg, prior);
  const std::size_t n = y.size();
  std::vector<Vec2> smoothed = pass.filtered;
  for (std::size_t k = n - 1; k-- > 0;) {
    const Mat2 a = TransitionMatrix(y.times[k + 1] - y.times[k]);
    const Mat2 gain =
        pass.filtered_cov[k] * a.transpose() * pass.predicted_cov[k + 1].inverse();
    smoothed[k] = pass.filtered[k] + gain * (smoothed[k + 1] - pass.predicted[k + 1]);
  }
  return MakeEstimate(y, cfg, prior, smoothed);
}

std::vector<double> NaiveSpeed(const MeasurementSeries& y) {
  CheckSeries(y, 2);
  std::vector<double> s;
  for (std::size_t k = 0; k + 1 < y.size(); ++k) {
    const double dt = y.times[k + 1] - y.times[k];
    if (dt == 0.0) throw DataError("duplicate timestamps in naive speed");
    s.push_back((y.d[k + 1] - y.d[k]) / dt);
  }
  s.push_back(s.back());
  return s;
}

double TotalVariation(const std::vector<double>& values) {
  double tv = 0.0;
  for (std::size_t k = 1; k < values.size(); ++k) tv += std::abs(values[k] - values[k - 1]);
  return tv;
}

}  // namespace annorefine
