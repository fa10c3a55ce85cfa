#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "annorefine/estimators.hpp"
#include "annorefine/geometry.hpp"
#include "annorefine/refine.hpp"
#include "annorefine/track_model.hpp"

namespace annorefine {

struct ProfileKnot {
  double t = 0.0;
  double value = 0.0;
};

// Piecewise-linear function of time, constant beyond the first/last knot.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  // Throws ConfigError when empty or when knot times are not increasing.
  explicit PiecewiseLinear(std::vector<ProfileKnot> knots);
  static PiecewiseLinear Constant(double value) { return PiecewiseLinear({{0.0, value}}); }

  double operator()(double t) const;
  const std::vector<ProfileKnot>& knots() const { return knots_; }

 private:
  std::vector<ProfileKnot> knots_;
};

// Planar motion integrated from speed and heading profiles. Positions are
// exact up to quadrature round-off (20-point Gauss-Legendre on <= 0.5 s
// pieces where both profiles are linear).
class PlanarMotion {
 public:
  PlanarMotion() = default;
  PlanarMotion(Eigen::Vector3d origin, PiecewiseLinear speed,
               PiecewiseLinear heading, double horizon);

  Eigen::Vector3d Position(double t) const;
  double Speed(double t) const { return speed_(t); }
  double Heading(double t) const { return heading_(t); }
  RigidTransform Pose(double t) const;

 private:
  Eigen::Vector2d Integrate(double a, double b) const;

  Eigen::Vector3d origin_ = Eigen::Vector3d::Zero();
  PiecewiseLinear speed_;
  PiecewiseLinear heading_;
  std::vector<double> piece_starts_;
  std::vector<Eigen::Vector2d> piece_offsets_;
};

struct AgentConfig {
  Eigen::Vector3d init_pos = Eigen::Vector3d::Zero();  // world, box center
  Eigen::Vector3d dims{4.5, 1.8, 1.5};
  PiecewiseLinear speed_profile = PiecewiseLinear::Constant(0.0);
  PiecewiseLinear heading_profile = PiecewiseLinear::Constant(0.0);
  std::string object_class = "car";
  std::vector<int> visible_to;  // sensor ids; empty = all sensors
};

struct SensorConfig {
  RigidTransform mount;  // vehicle <- sensor
  double sweep_period = 0.1;
  double azimuth_offset = 0.0;  // azimuth where the sweep starts, radians
  int rays_per_sweep = 1800;
  double max_range = 150.0;
};

struct ScenarioConfig {
  double duration = 10.0;
  double frame_rate = 10.0;
  PiecewiseLinear ego_speed_profile = PiecewiseLinear::Constant(22.0);
  double ego_yaw_rate = 0.0;
  std::vector<AgentConfig> agents = DefaultAgents();
  std::vector<SensorConfig> sensors = DefaultSensors();
  double annotation_noise_sigma = 0.1;
  bool view_bias = true;
  std::uint64_t rng_seed = 1;
  // Point hull sits this far inside the true box on every face.
  double surface_inset = 0.1;
  // Maximum inward depth of surface points; density peaks at the face.
  double surface_depth = 0.3;
  // Uniform offset of each surface sample within its grid cell, as a
  // fraction of the cell. Zero gives the same points for co-located sensors.
  double grid_jitter = 0.5;
  // Static world-fixed point rows at these lateral offsets (world y).
  std::vector<double> guardrail_offsets{-6.0, 6.0};

  int frame_count() const;
  double frame_interval() const { return 1.0 / frame_rate; }
  // Throws ConfigError naming the offending key.
  void Validate() const;

  // A van ahead in the ego lane, seen from behind by three forward sensors
  // whose sweeps reach it about 40 ms apart.
  static std::vector<AgentConfig> DefaultAgents();
  static std::vector<SensorConfig> DefaultSensors();
};

struct AgentFrameTruth {
  int agent_id = 0;
  int frame_id = 0;
  double t_star = 0.0;
  Eigen::Vector3d world_center = Eigen::Vector3d::Zero();
  double world_heading = 0.0;
  double speed = 0.0;
  AnnotatedBox vehicle_box;  // exact box at t_star in the vehicle frame
  int view_count = 0;        // groups of overlapping per-sensor views
  int point_count = 0;
};

// The object as one sensor saw it inside one superframe.
struct SensorViewTruth {
  int agent_id = 0;
  int frame_id = 0;
  int sensor_id = 0;
  double mean_tau = 0.0;
  AnnotatedBox box;  // true box at mean_tau, vehicle frame at t_star
  double span_min = 0.0;  // compensated extent along the t_star heading
  double span_max = 0.0;
  int point_count = 0;
};

constexpr int kBackgroundLabel = -1;

struct GroundTruth {
  PoseTrajectory ego_traj;
  std::vector<AgentFrameTruth> agent_frames;
  std::vector<SensorViewTruth> sensor_views;
  // Per frame, one label per point in scan order: agent id or background.
  std::vector<std::vector<int>> point_labels;

  std::vector<AgentFrameTruth> AgentFrames(int agent_id) const;
  std::vector<SensorViewTruth> Views(int agent_id, int frame_id) const;
};

struct Scenario {
  ScenarioConfig config;
  GroundTruth gt;
  CalibrationSet calibs;
  std::vector<std::vector<TimedPoint>> scans;  // per frame, sensor frames
  std::vector<Superframe> superframes;
  std::vector<std::string> warnings;
};

// Deterministic for a given config and seed.
Scenario GenerateScenario(const ScenarioConfig& cfg);

// Noisy vehicle-frame annotations keyed by agent id. Per frame the center is
// moved by N(0, sigma) along and across the heading, plus U(-s dt/2, s dt/2)
// along the heading when view_bias is set. Headings are exact. Each agent
// keeps its longest run of consecutive observed frames.
std::map<int, AnnotatedTrack> CorruptAnnotations(const GroundTruth& gt,
                                                 const ScenarioConfig& cfg);

struct FrameMetrics {
  double t_star = 0.0;
  double speed_error = 0.0;     // estimate - truth
  double position_error = 0.0;  // estimate - truth
  // Smallest fraction of a cluster's points inside its own pseudo box.
  double cluster_containment = 0.0;
  double pseudo_coverage = 0.0;   // object points inside any pseudo box
  double original_coverage = 0.0; // object points inside the annotation
  double center_error = 0.0;      // mean pseudo box to nearest true view box
  int pseudo_count = 0;
  int view_count = 0;
};

struct MetricsReport {
  double speed_rmse = 0.0;
  double speed_tv = 0.0;
  double position_rmse = 0.0;
  // NaN when no refinement was evaluated.
  double cluster_containment_min = 0.0;
  double coverage_min = 0.0;
  double coverage_mean = 0.0;
  double original_coverage_mean = 0.0;
  double center_error_median = 0.0;
  int view_count_mismatches = 0;
  std::vector<FrameMetrics> frames;
};

// Scores an estimate for one agent, plus its refinement when `refined` is
// non-empty (then `annotations` and `superframes` must be given as well).
// Throws AlignmentError when estimate or refinement times do not match the
// truth.
MetricsReport Evaluate(const StateEstimate& estimate,
                       std::span<const FrameRefinement> refined,
                       const GroundTruth& gt, int agent_id,
                       const AnnotatedTrack* annotations = nullptr,
                       std::span<const Superframe> superframes = {});

}  // namespace annorefine
