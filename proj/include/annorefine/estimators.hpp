#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "annorefine/box_qp.hpp"
#include "annorefine/track_model.hpp"

namespace annorefine {

struct SpeedBounds {
  double min = 0.0;
  double max = 0.0;
};

// Noise model of the along-path kinematics. `q`, `omega` and `psi` are the
// process, measurement and prior covariances; the MHE objective weights its
// residuals with their inverses.
struct EstimatorConfig {
  Eigen::Matrix2d q = Eigen::Matrix2d::Identity();
  double omega = 1.0;
  Eigen::Matrix2d psi = Eigen::Matrix2d::Identity();
  std::optional<int> horizon;  // empty = full track
  double u_nominal = 0.0;      // nominal acceleration, m/s^2
  std::optional<SpeedBounds> speed_bounds;
  double solver_tol = 1e-8;
  int max_iter = 200;

  // Throws ConfigError for non-PD covariances, omega <= 0, empty bound
  // interval or nonsensical solver settings.
  void Validate() const;
};

struct Prior {
  KinematicState x_tilde;
};

// First measured distance and first finite-difference speed.
Prior DefaultPrior(const MeasurementSeries& y);

struct ActiveSpeedBound {
  int index = 0;  // measurement index
  BoundSide side = BoundSide::kLower;
  bool operator==(const ActiveSpeedBound&) const = default;
};

struct StateEstimate {
  std::vector<double> times;
  std::vector<KinematicState> states;
  double objective = 0.0;
  bool converged = true;
  double kkt_residual = 0.0;
  std::vector<ActiveSpeedBound> active_constraints;

  std::vector<double> speeds() const;
  std::vector<double> distances() const;
};

// Arrival cost + measurement cost + process cost of `states` over the whole
// series, each residual weighted by the inverse covariance.
double MheObjective(const MeasurementSeries& y, const EstimatorConfig& cfg,
                    const Prior& prior,
                    const std::vector<KinematicState>& states);

// Full-information solve over every measurement in `y` (one window). Speed
// bounds are enforced when configured. cfg.horizon is ignored.
StateEstimate MheSolve(const MeasurementSeries& y, const EstimatorConfig& cfg,
                       const Prior& prior);

// Receding-horizon MHE with windows of cfg.horizon measurements (the whole
// series when unset). Each window's arrival prior is the previous window's
// smoothed state at the new window start; the first window uses `prior`.
// Steps before the first full window report that window's smoothed states.
StateEstimate MheReceding(const MeasurementSeries& y, const EstimatorConfig& cfg,
                          const Prior& prior);

// Kalman filter: prior mean/covariance (x_tilde, psi) at the first
// measurement, process covariance q, measurement variance omega.
StateEstimate KfFilter(const MeasurementSeries& y, const EstimatorConfig& cfg,
                       const Prior& prior);

// Rauch-Tung-Striebel smoother on top of KfFilter.
StateEstimate RtsSmooth(const MeasurementSeries& y, const EstimatorConfig& cfg,
                        const Prior& prior);

// (d[k+1] - d[k]) / (t[k+1] - t[k]); the last value is repeated.
std::vector<double> NaiveSpeed(const MeasurementSeries& y);

// Sum of |s[k+1] - s[k]|.
double TotalVariation(const std::vector<double>& values);

}  // namespace annorefine
