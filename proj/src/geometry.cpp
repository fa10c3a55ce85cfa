#include "annorefine/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "annorefine/errors.hpp"

namespace annorefine {
namespace {

// Slack for timestamps that went through 9-significant-digit text files.
constexpr double kTimestampSlack = 1e-6;
// Slack on trajectory bounds, relative to the magnitude of the query time.
constexpr double kSpanSlack = 1e-9;

bool IsProperRotation(const Eigen::Matrix3d& r) {
  const Eigen::Matrix3d err = r.transpose() * r - Eigen::Matrix3d::Identity();
  return err.cwiseAbs().maxCoeff() <= RigidTransform::kOrthonormalTolerance &&
         std::abs(r.determinant() - 1.0) <= RigidTransform::kOrthonormalTolerance;
}

}  // namespace

RigidTransform::RigidTransform()
    : rotation_(Eigen::Matrix3d::Identity()),
      translation_(Eigen::Vector3d::Zero()) {}

RigidTransform::RigidTransform(const Eigen::Matrix3d& rotation,
                               const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw ConfigError("rigid transform has non-finite entries");
  }
  if (!IsProperRotation(rotation)) {
    throw ConfigError("rotation matrix is not orthonormal with determinant +1");
  }
}

RigidTransform RigidTransform::FromTranslation(
    const Eigen::Vector3d& translation) {
  return RigidTransform(Eigen::Matrix3d::Identity(), translation);
}

RigidTransform RigidTransform::FromQuaternion(
    const Eigen::Quaterniond& q, const Eigen::Vector3d& translation) {
  const double norm = q.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw ConfigError("quaternion must be finite and nonzero");
  }
  return RigidTransform(q.normalized().toRotationMatrix(), translation);
}

RigidTransform RigidTransform::FromYaw(double yaw,
                                       const Eigen::Vector3d& translation) {
  return RigidTransform(
      Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix(),
      translation);
}

RigidTransform RigidTransform::FromMatrix(const Eigen::Matrix4d& m) {
  const Eigen::RowVector4d last(0, 0, 0, 1);
  if ((m.row(3) - last).cwiseAbs().maxCoeff() > kOrthonormalTolerance) {
    throw ConfigError("homogeneous matrix must end with row [0 0 0 1]");
  }
  return RigidTransform(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
}

Eigen::Quaterniond RigidTransform::quaternion() const {
  Eigen::Quaterniond q(rotation_);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

double RigidTransform::yaw() const {
  return std::atan2(rotation_(1, 0), rotation_(0, 0));
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Matrix3d rt = rotation_.transpose();
  return RigidTransform(Unchecked{}, rt, -(rt * translation_));
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  return RigidTransform(Unchecked{}, rotation_ * rhs.rotation_,
                        rotation_ * rhs.translation_ + translation_);
}

Eigen::Vector3d RigidTransform::operator*(const Eigen::Vector3d& p) const {
  return rotation_ * p + translation_;
}

double RotationAngleBetween(const RigidTransform& a, const RigidTransform& b) {
  return a.quaternion().angularDistance(b.quaternion());
}

PoseTrajectory::PoseTrajectory(std::vector<PoseKnot> knots)
    : knots_(std::move(knots)) {
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!std::isfinite(knots_[i].t)) {
      throw ConfigError("pose knot time must be finite");
    }
    if (i > 0 && !(knots_[i].t > knots_[i - 1].t)) {
      throw ConfigError(fmt::format(
          "pose knot times must be strictly increasing (knot {} at t={})", i,
          knots_[i].t));
    }
  }
}

double PoseTrajectory::start_time() const {
  if (knots_.empty()) throw DataError("empty pose trajectory");
  return knots_.front().t;
}

double PoseTrajectory::end_time() const {
  if (knots_.empty()) throw DataError("empty pose trajectory");
  return knots_.back().t;
}

bool PoseTrajectory::Contains(double t) const {
  if (knots_.size() < 2 || !std::isfinite(t)) return false;
  const double slack = kSpanSlack * std::max(1.0, std::abs(t));
  return t >= knots_.front().t - slack && t <= knots_.back().t + slack;
}

RigidTransform PoseTrajectory::Interpolate(double t) const {
  if (knots_.size() < 2) {
    throw DataError("pose interpolation needs at least two knots");
  }
  if (!Contains(t)) {
    throw OutOfRangeError(fmt::format(
        "time {} outside pose trajectory span [{}, {}]", t, knots_.front().t,
        knots_.back().t));
  }
  t = std::clamp(t, knots_.front().t, knots_.back().t);

  // First knot with time > t; the bracketing segment is [hi - 1, hi].
  auto hi = std::upper_bound(
      knots_.begin(), knots_.end(), t,
      [](double value, const PoseKnot& k) { return value < k.t; });
  if (hi == knots_.end()) return knots_.back().pose;
  const PoseKnot& k1 = *hi;
  const PoseKnot& k0 = *(hi - 1);
  if (t == k0.t) return k0.pose;

  const double alpha = (t - k0.t) / (k1.t - k0.t);
  const Eigen::Vector3d translation =
      (1.0 - alpha) * k0.pose.translation() + alpha * k1.pose.translation();
  const Eigen::Quaterniond rotation =
      k0.pose.quaternion().slerp(alpha, k1.pose.quaternion());
  return RigidTransform(rotation.normalized().toRotationMatrix(), translation);
}

Eigen::Vector3d MotionCompensate(const TimedPoint& p, const PoseTrajectory& traj,
                                 const RigidTransform& calib, double t_star) {
  const RigidTransform world_from_ref = traj.Interpolate(t_star);
  const RigidTransform world_from_acq = traj.Interpolate(p.timestamp);
  const RigidTransform ref_from_acq = world_from_ref.inverse() * world_from_acq;
  return ref_from_acq * (calib * p.position);
}

Superframe BuildSuperframe(std::span<const TimedPoint> points,
                           const PoseTrajectory& traj,
                           const CalibrationSet& calibs, double t,
                           double delta_t) {
  if (!(delta_t > 0.0) || !std::isfinite(t)) {
    throw ConfigError("superframe interval must have positive duration");
  }
  Superframe sf;
  sf.t_star = t + 0.5 * delta_t;
  sf.delta_t = delta_t;
  sf.points.reserve(points.size());

  const RigidTransform ref_from_world = traj.Interpolate(sf.t_star).inverse();
  for (const TimedPoint& p : points) {
    if (!std::isfinite(p.timestamp) || p.timestamp < t - kTimestampSlack ||
        p.timestamp > t + delta_t + kTimestampSlack) {
      throw DataError(fmt::format(
          "point timestamp {} outside superframe interval [{}, {}]",
          p.timestamp, t, t + delta_t));
    }
    auto calib = calibs.find(p.sensor_id);
    if (calib == calibs.end()) {
      throw CalibrationMissingError(
          fmt::format("no calibration for sensor {}", p.sensor_id));
    }
    TimedPoint out = p;
    out.position = (ref_from_world * traj.Interpolate(p.timestamp)) *
                   (calib->second * p.position);
    sf.points.push_back(out);
  }
  return sf;
}

Superframe BuildSuperframe(std::span<const std::vector<TimedPoint>> scans,
                           const PoseTrajectory& traj,
                           const CalibrationSet& calibs, double t,
                           double delta_t) {
  std::vector<TimedPoint> merged;
  std::size_t total = 0;
  for (const auto& scan : scans) total += scan.size();
  merged.reserve(total);
  for (const auto& scan : scans) merged.insert(merged.end(), scan.begin(), scan.end());
  return BuildSuperframe(std::span<const TimedPoint>(merged), traj, calibs, t,
                         delta_t);
}

}  // namespace annorefine
