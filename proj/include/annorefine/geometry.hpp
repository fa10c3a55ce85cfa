#pragma once

#include <map>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace annorefine {

// Proper rigid motion. Rotation is validated to be orthonormal with det +1.
class RigidTransform {
 public:
  static constexpr double kOrthonormalTolerance = 1e-9;

  RigidTransform();
  // Throws ConfigError when `rotation` is not a proper rotation.
  RigidTransform(const Eigen::Matrix3d& rotation,
                 const Eigen::Vector3d& translation);

  static RigidTransform Identity() { return RigidTransform(); }
  static RigidTransform FromTranslation(const Eigen::Vector3d& translation);
  // Quaternion is normalized before use.
  static RigidTransform FromQuaternion(const Eigen::Quaterniond& q,
                                       const Eigen::Vector3d& translation);
  static RigidTransform FromYaw(double yaw, const Eigen::Vector3d& translation =
                                               Eigen::Vector3d::Zero());
  static RigidTransform FromMatrix(const Eigen::Matrix4d& m);

  const Eigen::Matrix3d& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const;
  Eigen::Matrix4d matrix() const;
  // Heading of the rotated x-axis projected on the xy-plane.
  double yaw() const;

  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const;

 private:
  struct Unchecked {};
  RigidTransform(Unchecked, const Eigen::Matrix3d& rotation,
                 const Eigen::Vector3d& translation)
      : rotation_(rotation), translation_(translation) {}

  Eigen::Matrix3d rotation_;
  Eigen::Vector3d translation_;
};

// Angle of the relative rotation between two transforms, radians.
double RotationAngleBetween(const RigidTransform& a, const RigidTransform& b);

struct PoseKnot {
  double t = 0.0;
  RigidTransform pose;  // world <- vehicle
};

// Time-indexed world<-vehicle poses. Between knots the vehicle moves with
// constant linear and angular velocity.
class PoseTrajectory {
 public:
  PoseTrajectory() = default;
  // Throws ConfigError unless knot times are strictly increasing.
  explicit PoseTrajectory(std::vector<PoseKnot> knots);

  const std::vector<PoseKnot>& knots() const { return knots_; }
  bool empty() const { return knots_.empty(); }
  double start_time() const;
  double end_time() const;
  bool Contains(double t) const;

  // Throws OutOfRangeError outside [start_time, end_time] and DataError when
  // fewer than two knots are present.
  RigidTransform Interpolate(double t) const;

 private:
  std::vector<PoseKnot> knots_;
};

inline RigidTransform InterpolatePose(const PoseTrajectory& traj, double t) {
  return traj.Interpolate(t);
}

struct TimedPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double timestamp = 0.0;
  int sensor_id = 0;
  int frame_id = 0;
};

// Extrinsic calibrations vehicle <- sensor, keyed by sensor id.
using CalibrationSet = std::map<int, RigidTransform>;

struct Superframe {
  double t_star = 0.0;
  double delta_t = 0.0;
  // Positions are expressed in the vehicle frame at t_star.
  std::vector<TimedPoint> points;

  double start_time() const { return t_star - 0.5 * delta_t; }
  double end_time() const { return t_star + 0.5 * delta_t; }
};

// Maps a sensor-frame point acquired at p.timestamp into the vehicle frame at
// t_star: (W<-V(t_star))^-1 * W<-V(tau) * V<-L * p.
Eigen::Vector3d MotionCompensate(const TimedPoint& p, const PoseTrajectory& traj,
                                 const RigidTransform& calib, double t_star);

// Deskews and merges the scans of all sensors acquired in [t, t + delta_t]
// into the vehicle frame at t + delta_t / 2. Each output point keeps its
// timestamp, sensor id and frame id.
Superframe BuildSuperframe(std::span<const std::vector<TimedPoint>> scans,
                           const PoseTrajectory& traj,
                           const CalibrationSet& calibs, double t,
                           double delta_t);

// Flat-input overload used when reading point files.
Superframe BuildSuperframe(std::span<const TimedPoint> points,
                           const PoseTrajectory& traj,
                           const CalibrationSet& calibs, double t,
                           double delta_t);

}  // namespace annorefine
