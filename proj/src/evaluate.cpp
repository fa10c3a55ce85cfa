#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "annorefine/errors.hpp"
#include "annorefine/synth.hpp"

namespace annorefine {
namespace {

constexpr double kTimeMatch = 1e-6;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double Rms(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss / static_cast<double>(v.size()));
}

double Median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

const Superframe* FindSuperframe(std::span<const Superframe> sfs, double t) {
  for (const Superframe& sf : sfs) {
    if (std::abs(sf.t_star - t) <= kTimeMatch) return &sf;
  }
  return nullptr;
}

}  // namespace

MetricsReport Evaluate(const StateEstimate& estimate,
                       std::span<const FrameRefinement> refined,
                       const GroundTruth& gt, int agent_id,
                       const AnnotatedTrack* annotations,
                       std::span<const Superframe> superframes) {
  if (estimate.times.size() != estimate.states.size()) {
    throw AlignmentError("estimate times and states differ in length");
  }
  const std::vector<AgentFrameTruth> all_truth = gt.AgentFrames(agent_id);
  std::vector<AgentFrameTruth> truth;
  for (double t : estimate.times) {
    auto it = std::find_if(all_truth.begin(), all_truth.end(), [&](const auto& f) {
      return std::abs(f.t_star - t) <= kTimeMatch;
    });
    if (it == all_truth.end()) {
      throw AlignmentError(fmt::format(
          "no ground truth for agent {} at t={}", agent_id, t));
    }
    truth.push_back(*it);
  }
  if (truth.size() < 2) {
    throw AlignmentError("evaluation needs at least two aligned frames");
  }

  // True along-path distances use the same projection as the measurements.
  std::vector<AnnotatedBox> true_boxes;
  for (const auto& f : truth) {
    AnnotatedBox b;
    b.t_star = f.t_star;
    b.center = f.world_center;
    b.frame = BoxFrame::kWorld;
    b.heading = f.world_heading;
    b.track_id = agent_id;
    true_boxes.push_back(b);
  }
  const double spacing = truth[1].t_star - truth[0].t_star;
  const MeasurementSeries true_path =
      ProjectToPath(AnnotatedTrack(std::move(true_boxes), spacing));

  MetricsReport report;
  std::vector<double> speed_err, pos_err, speeds;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    FrameMetrics fm;
    fm.t_star = truth[i].t_star;
    fm.speed_error = estimate.states[i].s - truth[i].speed;
    fm.position_error = estimate.states[i].d - true_path.d[i];
    fm.view_count = truth[i].view_count;
    fm.cluster_containment = kNaN;
    fm.pseudo_coverage = kNaN;
    fm.original_coverage = kNaN;
    fm.center_error = kNaN;
    speed_err.push_back(fm.speed_error);
    pos_err.push_back(fm.position_error);
    speeds.push_back(estimate.states[i].s);
    report.frames.push_back(fm);
  }
  report.speed_rmse = Rms(speed_err);
  report.position_rmse = Rms(pos_err);
  report.speed_tv = TotalVariation(speeds);

  report.cluster_containment_min = kNaN;
  report.coverage_min = kNaN;
  report.coverage_mean = kNaN;
  report.original_coverage_mean = kNaN;
  report.center_error_median = kNaN;
  if (refined.empty()) return report;
  if (annotations == nullptr) {
    throw DataError("refinement evaluation needs the original annotations");
  }

  std::vector<double> coverage, original, center_errors, containment;
  for (const FrameRefinement& fr : refined) {
    auto frame = std::find_if(report.frames.begin(), report.frames.end(),
                              [&](const FrameMetrics& f) {
                                return std::abs(f.t_star - fr.t_star) <= kTimeMatch;
                              });
    auto box = std::find_if(annotations->boxes().begin(), annotations->boxes().end(),
                            [&](const AnnotatedBox& b) {
                              return std::abs(b.t_star - fr.t_star) <= kTimeMatch;
                            });
    const Superframe* sf = FindSuperframe(superframes, fr.t_star);
    if (frame == report.frames.end() || box == annotations->boxes().end() ||
        sf == nullptr) {
      throw AlignmentError(fmt::format("refined frame at t={} has no match", fr.t_star));
    }
    const int frame_id = truth[frame - report.frames.begin()].frame_id;
    if (static_cast<std::size_t>(frame_id) >= gt.point_labels.size() ||
        gt.point_labels[frame_id].size() != sf->points.size()) {
      throw AlignmentError(fmt::format("point labels do not match frame {}", frame_id));
    }

    int total = 0, in_union = 0, in_original = 0;
    const auto& labels = gt.point_labels[frame_id];
    for (std::size_t i = 0; i < sf->points.size(); ++i) {
      if (labels[i] != agent_id) continue;
      const Eigen::Vector3d& p = sf->points[i].position;
      ++total;
      if (BoxContains(*box, p)) ++in_original;
      for (const PseudoBox& pb : fr.pseudo_boxes) {
        if (BoxContains(pb.box, p)) {
          ++in_union;
          break;
        }
      }
    }
    for (const PseudoBox& pb : fr.pseudo_boxes) {
      if (pb.source_cluster < 0 ||
          pb.source_cluster >= static_cast<int>(fr.clusters.size())) {
        continue;
      }
      const auto& idx = fr.clusters[pb.source_cluster].point_indices;
      int inside = 0;
      for (int i : idx) {
        if (i < 0 || static_cast<std::size_t>(i) >= sf->points.size()) {
          throw AlignmentError(fmt::format("cluster point {} outside frame {}", i, frame_id));
        }
        if (BoxContains(pb.box, sf->points[i].position)) ++inside;
      }
      const double ratio = idx.empty() ? 1.0 : static_cast<double>(inside) / idx.size();
      if (std::isnan(frame->cluster_containment) || ratio < frame->cluster_containment) {
        frame->cluster_containment = ratio;
      }
    }
    if (!std::isnan(frame->cluster_containment)) containment.push_back(frame->cluster_containment);
    frame->pseudo_count = static_cast<int>(fr.pseudo_boxes.size());
    frame->pseudo_coverage = total ? static_cast<double>(in_union) / total : 1.0;
    frame->original_coverage = total ? static_cast<double>(in_original) / total : 1.0;
    coverage.push_back(frame->pseudo_coverage);
    original.push_back(frame->original_coverage);

    const std::vector<SensorViewTruth> views = gt.Views(agent_id, frame_id);
    if (!views.empty()) {
      double sum = 0.0;
      for (const PseudoBox& pb : fr.pseudo_boxes) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& v : views) best = std::min(best, (pb.box.center - v.box.center).norm());
        sum += best;
        center_errors.push_back(best);
      }
      frame->center_error = sum / static_cast<double>(fr.pseudo_boxes.size());
    }
    if (frame->pseudo_count != frame->view_count) ++report.view_count_mismatches;
  }
  if (!coverage.empty()) {
    report.coverage_min = *std::min_element(coverage.begin(), coverage.end());
    double s = 0.0, o = 0.0;
    for (double c : coverage) s += c;
    for (double c : original) o += c;
    report.coverage_mean = s / static_cast<double>(coverage.size());
    report.original_coverage_mean = o / static_cast<double>(original.size());
  }
  if (!containment.empty()) {
    report.cluster_containment_min = *std::min_element(containment.begin(), containment.end());
  }
  report.center_error_median = Median(center_errors);
  return report;
}

}  // namespace annorefine
