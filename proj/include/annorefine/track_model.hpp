#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "annorefine/geometry.hpp"

namespace annorefine {

// Wraps an angle to (-pi, pi].
double NormalizeAngle(double angle);
// Mean direction of two angles; returns `a` when they are opposite.
double CircularMean(double a, double b);
// Unit direction [cos, sin, 0].
Eigen::Vector3d HeadingDirection(double heading);

enum class BoxFrame { kVehicle, kWorld };

struct AnnotatedBox {
  double t_star = 0.0;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  BoxFrame frame = BoxFrame::kVehicle;
  Eigen::Vector3d dims = Eigen::Vector3d::Ones();  // length, width, height
  double heading = 0.0;
  int track_id = 0;
  std::string object_class;

  double length() const { return dims.x(); }
};

// Throws ConfigError on non-positive dims or non-finite fields.
void ValidateBox(const AnnotatedBox& box);

// Boxes of one object, sorted by time, with near-uniform spacing.
class AnnotatedTrack {
 public:
  static constexpr double kSpacingTolerance = 0.10;

  AnnotatedTrack() = default;
  // Throws DegenerateTrackError for fewer than two boxes and DataError when
  // the boxes break the ordering, id or spacing invariants.
  AnnotatedTrack(std::vector<AnnotatedBox> boxes, double delta_t);
  // Infers the nominal spacing as the median time step.
  static AnnotatedTrack FromBoxes(std::vector<AnnotatedBox> boxes);

  const std::vector<AnnotatedBox>& boxes() const { return boxes_; }
  double delta_t() const { return delta_t_; }
  int track_id() const { return boxes_.empty() ? -1 : boxes_.front().track_id; }
  std::size_t size() const { return boxes_.size(); }
  BoxFrame frame() const;

 private:
  std::vector<AnnotatedBox> boxes_;
  double delta_t_ = 0.0;
};

struct MeasurementSeries {
  std::vector<double> d;         // along-path distance, d[0] = 0
  std::vector<double> headings;  // radians
  std::vector<double> times;     // seconds
  double delta_t = 0.0;

  std::size_t size() const { return d.size(); }
  // Throws DataError when lengths differ or times are not increasing.
  void Validate() const;
};

struct KinematicState {
  double d = 0.0;  // meters
  double s = 0.0;  // meters / second
};

struct WorldTrack {
  AnnotatedTrack track;
  // Set when the input was already in the world frame and was passed through.
  bool already_world = false;
};

// Lifts vehicle-frame boxes into the world frame using the ego pose at each
// box time.
WorldTrack BoxesToWorld(const AnnotatedTrack& track, const PoseTrajectory& traj);

// Reduces a world-frame track to along-path distances. Each segment is
// projected on the circular mean of its endpoint headings.
MeasurementSeries ProjectToPath(const AnnotatedTrack& track);

// Constant-acceleration step over delta_t.
KinematicState Transition(const KinematicState& x, double accel, double delta_t);

inline double Measure(const KinematicState& x) { return x.d; }

}  // namespace annorefine
