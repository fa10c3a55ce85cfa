#include "annorefine/track_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "annorefine/errors.hpp"

namespace annorefine {

double NormalizeAngle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

double CircularMean(double a, double b) {
  const double s = std::sin(a) + std::sin(b);
  const double c = std::cos(a) + std::cos(b);
  if (std::hypot(s, c) < 1e-12) return NormalizeAngle(a);
  return std::atan2(s, c);
}

Eigen::Vector3d HeadingDirection(double heading) {
  return {std::cos(heading), std::sin(heading), 0.0};
}

void ValidateBox(const AnnotatedBox& box) {
  if (!std::isfinite(box.t_star) || !box.center.allFinite() ||
      !std::isfinite(box.heading)) {
    throw ConfigError(fmt::format("box of track {} has non-finite fields",
                                  box.track_id));
  }
  if (!(box.dims.minCoeff() > 0.0) || !box.dims.allFinite()) {
    throw ConfigError(fmt::format("box of track {} at t={} has non-positive dims",
                                  box.track_id, box.t_star));
  }
}

AnnotatedTrack::AnnotatedTrack(std::vector<AnnotatedBox> boxes, double delta_t)
    : boxes_(std::move(boxes)), delta_t_(delta_t) {
  if (boxes_.size() < 2) {
    throw DegenerateTrackError(
        fmt::format("track needs at least 2 boxes, got {}", boxes_.size()));
  }
  if (!(delta_t_ > 0.0)) throw ConfigError("track spacing must be positive");
  for (std::size_t i = 0; i < boxes_.size(); ++i) {
    AnnotatedBox& b = boxes_[i];
    ValidateBox(b);
    b.heading = NormalizeAngle(b.heading);
    if (b.track_id != boxes_.front().track_id) {
      throw DataError("boxes of one track must share a track id");
    }
    if (i == 0) continue;
    const double step = b.t_star - boxes_[i - 1].t_star;
    if (!(step > 0.0)) {
      throw DataError(fmt::format(
          "track {}: timestamps must be strictly increasing at index {}",
          b.track_id, i));
    }
    if (std::abs(step - delta_t_) > kSpacingTolerance * delta_t_) {
      throw DataError(fmt::format(
          "track {}: spacing {} at index {} deviates more than 10% from {}",
          b.track_id, step, i, delta_t_));
    }
  }
}

AnnotatedTrack AnnotatedTrack::FromBoxes(std::vector<AnnotatedBox> boxes) {
  if (boxes.size() < 2) {
    throw DegenerateTrackError(
        fmt::format("track needs at least 2 boxes, got {}", boxes.size()));
  }
  std::sort(boxes.begin(), boxes.end(),
            [](const AnnotatedBox& a, const AnnotatedBox& b) {
              return a.t_star < b.t_star;
            });
  std::vector<double> steps;
  for (std::size_t i = 1; i < boxes.size(); ++i) {
    steps.push_back(boxes[i].t_star - boxes[i - 1].t_star);
  }
  std::nth_element(steps.begin(), steps.begin() + steps.size() / 2, steps.end());
  const double median = steps[steps.size() / 2];
  return AnnotatedTrack(std::move(boxes), median);
}

BoxFrame AnnotatedTrack::frame() const {
  return boxes_.empty() ? BoxFrame::kVehicle : boxes_.front().frame;
}

void MeasurementSeries::Validate() const {
  if (d.size() != headings.size() || d.size() != times.size()) {
    throw DataError("measurement series fields have different lengths");
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i]) || !std::isfinite(times[i]) ||
        !std::isfinite(headings[i])) {
      throw DataError("measurement series has non-finite entries");
    }
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw DataError("measurement times must be strictly increasing");
    }
  }
}

WorldTrack BoxesToWorld(const AnnotatedTrack& track, const PoseTrajectory& traj) {
  const auto& in = track.boxes();
  const bool any_world = std::any_of(in.begin(), in.end(), [](const auto& b) {
    return b.frame == BoxFrame::kWorld;
  });
  if (any_world) {
    const bool all_world = std::all_of(in.begin(), in.end(), [](const auto& b) {
      return b.frame == BoxFrame::kWorld;
    });
    if (!all_world) throw DataError("track mixes vehicle and world frame boxes");
    return {track, true};
  }

  std::vector<AnnotatedBox> out = in;
  for (AnnotatedBox& b : out) {
    const RigidTransform world_from_vehicle = traj.Interpolate(b.t_star);
    b.center = world_from_vehicle * b.center;
    const Eigen::Vector3d dir =
        world_from_vehicle.rotation() * HeadingDirection(b.heading);
    b.heading = std::atan2(dir.y(), dir.x());
    b.frame = BoxFrame::kWorld;
  }
  return {AnnotatedTrack(std::move(out), track.delta_t()), false};
}

MeasurementSeries ProjectToPath(const AnnotatedTrack& track) {
  const auto& boxes = track.boxes();
  if (boxes.size() < 2) {
    throw DegenerateTrackError("projection needs at least 2 boxes");
  }
  if (track.frame() != BoxFrame::kWorld) {
    throw DataError("path projection expects a world-frame track");
  }
  MeasurementSeries y;
  y.delta_t = track.delta_t();
  y.d.reserve(boxes.size());
  y.d.push_back(0.0);
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    y.headings.push_back(boxes[k].heading);
    y.times.push_back(boxes[k].t_star);
    if (k == 0) continue;
    const double segment_heading =
        CircularMean(boxes[k - 1].heading, boxes[k].heading);
    const Eigen::Vector3d step = boxes[k].center - boxes[k - 1].center;
    y.d.push_back(y.d.back() + step.dot(HeadingDirection(segment_heading)));
  }
  return y;
}

KinematicState Transition(const KinematicState& x, double accel,
                          double delta_t) {
  if (!(delta_t > 0.0)) throw DataError("transition step must be positive");
  return {x.d + x.s * delta_t + 0.5 * accel * delta_t * delta_t,
          x.s + accel * delta_t};
}

}  // namespace annorefine
