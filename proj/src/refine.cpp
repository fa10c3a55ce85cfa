#include "annorefine/refine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "annorefine/errors.hpp"
#include "annorefine/kde.hpp"

namespace annorefine {
namespace {

constexpr int kKdeGridPoints = 512;
constexpr double kTieTolerance = 1e-9;

Eigen::Vector3d ToBoxFrame(const AnnotatedBox& box, const Eigen::Vector3d& p) {
  const double c = std::cos(box.heading);
  const double s = std::sin(box.heading);
  const Eigen::Vector3d d = p - box.center;
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z()};
}

PseudoBox PassThrough(const AnnotatedBox& box) {
  return PseudoBox{box, -1, Eigen::Vector3d::Zero()};
}

}  // namespace

void RefineParams::Validate() const {
  if (!(gap_threshold > 0.0)) throw ConfigError("gap_threshold must be positive");
  if (min_cluster_points < 1) throw ConfigError("min_cluster_points must be >= 1");
  if (!(roi_margin > 0.0)) throw ConfigError("roi_margin must be positive");
  if (kde_bandwidth && !(*kde_bandwidth > 0.0)) {
    throw ConfigError("kde_bandwidth must be positive or \"auto\"");
  }
  if (!(anchor_margin > 0.0)) throw ConfigError("anchor_margin must be positive");
  if (!(min_refine_speed > 0.0)) throw ConfigError("min_refine_speed must be positive");
}

bool BoxContains(const AnnotatedBox& box, const Eigen::Vector3d& p,
                 double tolerance) {
  const Eigen::Vector3d local = ToBoxFrame(box, p);
  return (local.cwiseAbs() - (0.5 * box.dims).cwiseAbs()).maxCoeff() <= tolerance;
}

std::vector<int> CollectRoiPoints(const Superframe& sf, const AnnotatedBox& box,
                                  double s_star, const RefineParams& params) {
  const double along = 0.5 * box.dims.x() + 0.5 * std::abs(s_star) * sf.delta_t +
                       params.roi_margin;
  const Eigen::Vector3d half(along, 0.5 * box.dims.y() + params.roi_margin,
                             0.5 * box.dims.z() + params.roi_margin);
  std::vector<int> out;
  for (std::size_t i = 0; i < sf.points.size(); ++i) {
    const Eigen::Vector3d local = ToBoxFrame(box, sf.points[i].position);
    if ((local.cwiseAbs() - half).maxCoeff() <= 0.0) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<ViewCluster> ClusterAlongHeading(const Superframe& sf,
                                             std::span<const int> indices,
                                             double heading,
                                             const RefineParams& params) {
  const Eigen::Vector3d axis = HeadingDirection(heading);
  std::vector<std::pair<double, int>> projected;
  projected.reserve(indices.size());
  for (int idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= sf.points.size()) {
      throw DataError(fmt::format("point index {} out of range", idx));
    }
    projected.emplace_back(sf.points[idx].position.dot(axis), idx);
  }
  std::sort(projected.begin(), projected.end());

  std::vector<ViewCluster> clusters;
  std::size_t start = 0;
  auto flush = [&](std::size_t end) {
    if (end - start < static_cast<std::size_t>(params.min_cluster_points)) return;
    ViewCluster c;
    std::map<int, int> sensor_counts;
    double tau_sum = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      const TimedPoint& p = sf.points[projected[i].second];
      c.point_indices.push_back(projected[i].second);
      tau_sum += p.timestamp;
      ++sensor_counts[p.sensor_id];
    }
    c.mean_tau = tau_sum / static_cast<double>(end - start);
    c.span_min = projected[start].first;
    c.span_max = projected[end - 1].first;
    int best = -1;
    for (const auto& [sensor, count] : sensor_counts) {
      if (count > best) {  // std::map order: lowest sensor id wins ties
        best = count;
        c.dominant_sensor = sensor;
      }
    }
    clusters.push_back(std::move(c));
  };
  for (std::size_t i = 1; i <= projected.size(); ++i) {
    if (i == projected.size() ||
        projected[i].first - projected[i - 1].first > params.gap_threshold) {
      flush(i);
      start = i;
    }
  }
  return clusters;
}

Eigen::Vector3d ObjectDisplacement(double tau, double t_star, double speed,
                                   double heading) {
  return (tau - t_star) * speed * HeadingDirection(heading);
}

std::vector<Eigen::Vector3d> SpeedCompensate(const Superframe& sf,
                                             std::span<const int> indices,
                                             double speed, double heading) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(indices.size());
  for (int idx : indices) {
    const TimedPoint& p = sf.points.at(static_cast<std::size_t>(idx));
    out.push_back(p.position - ObjectDisplacement(p.timestamp, sf.t_star, speed, heading));
  }
  return out;
}

AnchorEstimate FindOrientationAnchor(std::span<const double> coords,
                                     const RefineParams& params) {
  if (coords.size() < static_cast<std::size_t>(params.min_cluster_points) ||
      coords.empty()) {
    throw InsufficientDataError(fmt::format(
        "orientation anchor needs at least {} coordinates, got {}",
        std::max(1, params.min_cluster_points), coords.size()));
  }
  const double bandwidth =
      params.kde_bandwidth ? *params.kde_bandwidth : SilvermanBandwidth(coords);
  GaussianKde kde(std::vector<double>(coords.begin(), coords.end()), bandwidth);

  AnchorEstimate est;
  est.mode = kde.Mode(kKdeGridPoints);
  est.mean = std::accumulate(coords.begin(), coords.end(), 0.0) /
             static_cast<double>(coords.size());
  if (std::abs(est.mode - est.mean) <= kTieTolerance) {
    est.anchor = params.tie_anchor;
  } else {
    est.anchor = est.mode < est.mean ? Anchor::kRear : Anchor::kFront;
  }
  return est;
}

AnnotatedBox AnchorBox(const AnnotatedBox& box, std::span<const double> coords,
                       Anchor anchor, const RefineParams& params) {
  if (coords.empty()) throw InsufficientDataError("anchoring needs coordinates");
  const auto [lo, hi] = std::minmax_element(coords.begin(), coords.end());
  const Eigen::Vector3d axis = HeadingDirection(box.heading);
  const double half_length = 0.5 * box.length();
  const double target = anchor == Anchor::kRear
                            ? *lo - params.anchor_margin + half_length
                            : *hi + params.anchor_margin - half_length;
  AnnotatedBox out = box;
  out.center += (target - box.center.dot(axis)) * axis;
  return out;
}

std::vector<PseudoBox> GeneratePseudoBoxes(const AnnotatedBox& anchored,
                                           const std::vector<ViewCluster>& clusters,
                                           double speed, double heading,
                                           double t_star) {
  std::vector<PseudoBox> out;
  out.reserve(clusters.size());
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    PseudoBox pb;
    pb.applied_shift = ObjectDisplacement(clusters[i].mean_tau, t_star, speed, heading);
    pb.box = anchored;
    pb.box.center += pb.applied_shift;
    pb.source_cluster = static_cast<int>(i);
    out.push_back(std::move(pb));
  }
  return out;
}

FrameRefinement RefineFrame(const AnnotatedBox& box, const Superframe& sf,
                            double speed, const RefineParams& params) {
  params.Validate();
  FrameRefinement out;
  out.t_star = box.t_star;
  if (std::abs(speed) < params.min_refine_speed) {
    out.pseudo_boxes.push_back(PassThrough(box));
    return out;
  }

  const std::vector<int> roi = CollectRoiPoints(sf, box, speed, params);
  out.clusters = ClusterAlongHeading(sf, roi, box.heading, params);
  if (out.clusters.empty()) {
    out.fallback = true;
    out.pseudo_boxes.push_back(PassThrough(box));
    return out;
  }

  std::vector<int> members;
  for (const ViewCluster& c : out.clusters) {
    members.insert(members.end(), c.point_indices.begin(), c.point_indices.end());
  }
  const Eigen::Vector3d axis = HeadingDirection(box.heading);
  std::vector<double> coords;
  for (const Eigen::Vector3d& p : SpeedCompensate(sf, members, speed, box.heading)) {
    coords.push_back(p.dot(axis));
  }
  const AnchorEstimate anchor = FindOrientationAnchor(coords, params);
  const AnnotatedBox anchored = AnchorBox(box, coords, anchor.anchor, params);
  out.pseudo_boxes =
      GeneratePseudoBoxes(anchored, out.clusters, speed, box.heading, sf.t_star);
  out.anchored = true;
  return out;
}

std::vector<FrameRefinement> RefineTrack(const AnnotatedTrack& track,
                                         std::span<const Superframe> superframes,
                                         const StateEstimate& estimate,
                                         const RefineParams& params) {
  params.Validate();
  if (track.frame() != BoxFrame::kVehicle) {
    throw DataError("refinement expects boxes in the superframe (vehicle) frame");
  }
  if (estimate.times.size() != estimate.states.size()) {
    throw DataError("estimate times and states differ in length");
  }
  const double half = 0.5 * track.delta_t();

  std::vector<FrameRefinement> out;
  out.reserve(track.size());
  for (const AnnotatedBox& box : track.boxes()) {
    auto sf = std::min_element(superframes.begin(), superframes.end(),
                               [&](const Superframe& a, const Superframe& b) {
                                 return std::abs(a.t_star - box.t_star) <
                                        std::abs(b.t_star - box.t_star);
                               });
    if (sf == superframes.end() || std::abs(sf->t_star - box.t_star) > half) {
      throw AlignmentError(fmt::format("no superframe within {} s of box at t={}",
                                       half, box.t_star));
    }
    auto t = std::min_element(estimate.times.begin(), estimate.times.end(),
                              [&](double a, double b) {
                                return std::abs(a - box.t_star) < std::abs(b - box.t_star);
                              });
    if (t == estimate.times.end() || std::abs(*t - box.t_star) > half) {
      throw AlignmentError(fmt::format("no speed estimate within {} s of box at t={}",
                                       half, box.t_star));
    }
    const double speed = estimate.states[t - estimate.times.begin()].s;
    out.push_back(RefineFrame(box, *sf, speed, params));
  }
  return out;
}

}  // namespace annorefine
