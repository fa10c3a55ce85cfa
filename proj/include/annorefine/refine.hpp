#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "annorefine/estimators.hpp"
#include "annorefine/geometry.hpp"
#include "annorefine/track_model.hpp"

namespace annorefine {

enum class Anchor { kRear, kFront };

struct RefineParams {
  double gap_threshold = 0.3;   // m
  int min_cluster_points = 5;
  double roi_margin = 0.5;      // m
  std::optional<double> kde_bandwidth;  // empty = Silverman
  double anchor_margin = 0.05;  // m
  double min_refine_speed = 1.0;  // m/s
  Anchor tie_anchor = Anchor::kRear;

  void Validate() const;
};

// One temporal view of an object: a gap-separated group of points along the
// box heading.
struct ViewCluster {
  std::vector<int> point_indices;
  double mean_tau = 0.0;
  double span_min = 0.0;  // along heading, m
  double span_max = 0.0;
  int dominant_sensor = 0;
};

struct PseudoBox {
  AnnotatedBox box;
  int source_cluster = -1;  // -1 when the annotation was passed through
  Eigen::Vector3d applied_shift = Eigen::Vector3d::Zero();
};

struct AnchorEstimate {
  Anchor anchor = Anchor::kRear;
  double mode = 0.0;
  double mean = 0.0;
};

// Point-in-oriented-box test (yaw-only boxes); `tolerance` widens every face.
bool BoxContains(const AnnotatedBox& box, const Eigen::Vector3d& p,
                 double tolerance = 0.0);

// Indices of superframe points inside the box grown by |s_star| * dt / 2 +
// roi_margin at both ends along heading and by roi_margin across.
std::vector<int> CollectRoiPoints(const Superframe& sf, const AnnotatedBox& box,
                                  double s_star, const RefineParams& params);

// Gap splitting of the heading projections. Clusters smaller than
// min_cluster_points are dropped; the rest are ordered rear to front.
std::vector<ViewCluster> ClusterAlongHeading(const Superframe& sf,
                                             std::span<const int> indices,
                                             double heading,
                                             const RefineParams& params);

// Displacement of an object moving at `speed` along `heading` between t_star
// and tau: (tau - t_star) * speed * [cos, sin, 0].
Eigen::Vector3d ObjectDisplacement(double tau, double t_star, double speed,
                                   double heading);

// Moves every selected point back to where the object was at sf.t_star.
std::vector<Eigen::Vector3d> SpeedCompensate(const Superframe& sf,
                                             std::span<const int> indices,
                                             double speed, double heading);

// Rear when the KDE mode lies behind the mean of the coordinates, front
// otherwise. |mode - mean| <= 1e-9 resolves to params.tie_anchor.
AnchorEstimate FindOrientationAnchor(std::span<const double> coords,
                                     const RefineParams& params);

// Slides the box along its heading so the anchored face sits anchor_margin
// beyond the extreme coordinate.
AnnotatedBox AnchorBox(const AnnotatedBox& box, std::span<const double> coords,
                       Anchor anchor, const RefineParams& params);

// One copy of the anchored box per cluster, moved to where the object was at
// the cluster's mean timestamp.
std::vector<PseudoBox> GeneratePseudoBoxes(const AnnotatedBox& anchored,
                                           const std::vector<ViewCluster>& clusters,
                                           double speed, double heading,
                                           double t_star);

struct FrameRefinement {
  double t_star = 0.0;
  std::vector<PseudoBox> pseudo_boxes;
  std::vector<ViewCluster> clusters;
  bool anchored = false;
  // No valid cluster was found; the annotation was passed through.
  bool fallback = false;
};

FrameRefinement RefineFrame(const AnnotatedBox& box, const Superframe& sf,
                            double speed, const RefineParams& params);

// Runs RefineFrame for every box of a vehicle-frame track. Superframes and
// estimate states are matched to boxes by time within half a frame; a
// missing match throws AlignmentError.
std::vector<FrameRefinement> RefineTrack(const AnnotatedTrack& track,
                                         std::span<const Superframe> superframes,
                                         const StateEstimate& estimate,
                                         const RefineParams& params);

}  // namespace annorefine
