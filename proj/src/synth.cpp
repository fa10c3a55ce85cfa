#include "annorefine/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <fmt/format.h>

#include "annorefine/errors.hpp"

namespace annorefine {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMaxPiece = 0.5;        // s, quadrature piece length
constexpr double kEgoKnotSpacing = 0.01;  // s
constexpr double kMinPointSpacing = 0.02;
constexpr double kMaxPointSpacing = 1.0;
constexpr double kGuardrailSpacing = 1.0;
constexpr double kGuardrailHeight = 0.5;
constexpr double kGuardrailBehind = 10.0;
constexpr double kGuardrailAhead = 60.0;
// Decorrelates the annotation-noise stream from the point-sampling stream.
constexpr std::uint64_t kAnnotationStream = 0x9E3779B97F4A7C15ULL;

using Rng = boost::random::mt19937_64;

double Uniform01(Rng& rng) { return boost::random::uniform_01<double>()(rng); }

double WrapTwoPi(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w -= kTwoPi;
  return w;
}

struct Face {
  Eigen::Vector3d normal;  // body frame, outward
  int normal_axis;
  int axis_u;
  int axis_v;
};

const std::array<Face, 6>& BoxFaces() {
  static const std::array<Face, 6> faces{{
      {Eigen::Vector3d::UnitX(), 0, 1, 2},
      {-Eigen::Vector3d::UnitX(), 0, 1, 2},
      {Eigen::Vector3d::UnitY(), 1, 0, 2},
      {-Eigen::Vector3d::UnitY(), 1, 0, 2},
      {Eigen::Vector3d::UnitZ(), 2, 0, 1},
      {-Eigen::Vector3d::UnitZ(), 2, 0, 1},
  }};
  return faces;
}

PlanarMotion EgoMotion(const ScenarioConfig& cfg) {
  const double end = cfg.duration;
  return PlanarMotion(Eigen::Vector3d::Zero(), cfg.ego_speed_profile,
                      PiecewiseLinear({{0.0, 0.0}, {end, cfg.ego_yaw_rate * end}}),
                      end);
}

PoseTrajectory SampleEgoTrajectory(const PlanarMotion& ego, double duration) {
  std::vector<PoseKnot> knots;
  const int count = static_cast<int>(std::ceil(duration / kEgoKnotSpacing - 1e-9));
  for (int i = 0; i <= count; ++i) {
    const double t = std::min(duration, i * kEgoKnotSpacing);
    if (!knots.empty() && t <= knots.back().t) continue;
    knots.push_back({t, ego.Pose(t)});
  }
  return PoseTrajectory(std::move(knots));
}

// Heading of world direction `heading` seen from the vehicle pose.
double VehicleHeading(const RigidTransform& world_from_vehicle, double heading) {
  const Eigen::Vector3d dir =
      world_from_vehicle.rotation().transpose() * HeadingDirection(heading);
  return std::atan2(dir.y(), dir.x());
}

struct SampledPoint {
  TimedPoint point;
  int label;
  Eigen::Vector3d compensated;  // exact vehicle-at-t* position
};

}  // namespace

PiecewiseLinear::PiecewiseLinear(std::vector<ProfileKnot> knots)
    : knots_(std::move(knots)) {
  if (knots_.empty()) throw ConfigError("profile needs at least one knot");
  for (std::size_t i = 0; i < knots_.size(); ++i) {
    if (!std::isfinite(knots_[i].t) || !std::isfinite(knots_[i].value)) {
      throw ConfigError("profile knots must be finite");
    }
    if (i > 0 && !(knots_[i].t > knots_[i - 1].t)) {
      throw ConfigError("profile knot times must be strictly increasing");
    }
  }
}

double PiecewiseLinear::operator()(double t) const {
  if (knots_.empty()) return 0.0;
  if (t <= knots_.front().t) return knots_.front().value;
  if (t >= knots_.back().t) return knots_.back().value;
  auto hi = std::upper_bound(knots_.begin(), knots_.end(), t,
                             [](double v, const ProfileKnot& k) { return v < k.t; });
  const ProfileKnot& a = *(hi - 1);
  const ProfileKnot& b = *hi;
  const double alpha = (t - a.t) / (b.t - a.t);
  return a.value + alpha * (b.value - a.value);
}

PlanarMotion::PlanarMotion(Eigen::Vector3d origin, PiecewiseLinear speed,
                           PiecewiseLinear heading, double horizon)
    : origin_(std::move(origin)), speed_(std::move(speed)), heading_(std::move(heading)) {
  std::vector<double> breaks{0.0, horizon};
  for (const auto& k : speed_.knots()) {
    if (k.t > 0.0 && k.t < horizon) breaks.push_back(k.t);
  }
  for (const auto& k : heading_.knots()) {
    if (k.t > 0.0 && k.t < horizon) breaks.push_back(k.t);
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double len = breaks[i + 1] - breaks[i];
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / kMaxPiece)));
    for (int j = 0; j < pieces; ++j) piece_starts_.push_back(breaks[i] + len * j / pieces);
  }
  if (piece_starts_.empty()) piece_starts_.push_back(0.0);
  piece_offsets_.push_back(Eigen::Vector2d::Zero());
  for (std::size_t i = 1; i < piece_starts_.size(); ++i) {
    piece_offsets_.push_back(piece_offsets_.back() +
                             Integrate(piece_starts_[i - 1], piece_starts_[i]));
  }
}

Eigen::Vector2d PlanarMotion::Integrate(double a, double b) const {
  using Quad = boost::math::quadrature::gauss<double, 20>;
  const double x = Quad::integrate(
      [this](double t) { return speed_(t) * std::cos(heading_(t)); }, a, b);
  const double y = Quad::integrate(
      [this](double t) { return speed_(t) * std::sin(heading_(t)); }, a, b);
  return {x, y};
}

Eigen::Vector3d PlanarMotion::Position(double t) const {
  auto it = std::upper_bound(piece_starts_.begin(), piece_starts_.end(), t);
  const std::size_t j = it == piece_starts_.begin()
                            ? 0
                            : static_cast<std::size_t>(it - piece_starts_.begin()) - 1;
  const Eigen::Vector2d xy = piece_offsets_[j] + Integrate(piece_starts_[j], t);
  return origin_ + Eigen::Vector3d(xy.x(), xy.y(), 0.0);
}

RigidTransform PlanarMotion::Pose(double t) const {
  return RigidTransform::FromYaw(Heading(t), Position(t));
}

int ScenarioConfig::frame_count() const {
  return static_cast<int>(std::llround(duration * frame_rate));
}

void ScenarioConfig::Validate() const {
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw ConfigError("duration: must be positive");
  }
  if (!(frame_rate > 0.0) || !std::isfinite(frame_rate)) {
    throw ConfigError("frame_rate: must be positive");
  }
  if (frame_count() < 1) throw ConfigError("duration: shorter than one frame");
  if (sensors.empty()) throw ConfigError("sensors: at least one sensor is required");
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    const SensorConfig& s = sensors[i];
    if (!(s.sweep_period > 0.0) || s.sweep_period > frame_interval() + 1e-12) {
      throw ConfigError(fmt::format(
          "sensors[{}].sweep_period: must be in (0, 1/frame_rate]", i));
    }
    if (s.rays_per_sweep < 1) {
      throw ConfigError(fmt::format("sensors[{}].rays_per_sweep: must be >= 1", i));
    }
    if (!(s.max_range > 0.0)) {
      throw ConfigError(fmt::format("sensors[{}].max_range: must be positive", i));
    }
  }
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const AgentConfig& a = agents[i];
    if (!(a.dims.minCoeff() > 0.0) || !a.dims.allFinite()) {
      throw ConfigError(fmt::format("agents[{}].dims: must be positive", i));
    }
    if (!(a.dims.minCoeff() > 2.0 * surface_inset)) {
      throw ConfigError(fmt::format("agents[{}].dims: smaller than twice surface_inset", i));
    }
    if (!a.init_pos.allFinite()) {
      throw ConfigError(fmt::format("agents[{}].init_pos: must be finite", i));
    }
    for (int id : a.visible_to) {
      if (id < 0 || static_cast<std::size_t>(id) >= sensors.size()) {
        throw ConfigError(fmt::format("agents[{}].visible_to: unknown sensor {}", i, id));
      }
    }
  }
  if (!(annotation_noise_sigma >= 0.0)) {
    throw ConfigError("annotation_noise_sigma: must be >= 0");
  }
  if (!(surface_inset >= 0.0)) throw ConfigError("surface_inset: must be >= 0");
  if (!(surface_depth >= 0.0)) throw ConfigError("surface_depth: must be >= 0");
  if (!(grid_jitter >= 0.0 && grid_jitter <= 1.0)) {
    throw ConfigError("grid_jitter: must be in [0, 1]");
  }
}

std::vector<AgentConfig> ScenarioConfig::DefaultAgents() {
  AgentConfig van;
  van.init_pos = {25.0, 0.0, 1.1};
  van.dims = {5.0, 2.0, 2.2};
  van.speed_profile = PiecewiseLinear({{0.0, 25.0}, {5.0, 27.0}, {10.0, 24.0}});
  van.heading_profile = PiecewiseLinear::Constant(0.0);
  van.object_class = "van";
  return {van};
}

std::vector<SensorConfig> ScenarioConfig::DefaultSensors() {
  std::vector<SensorConfig> sensors;
  const double lateral[] = {-0.6, 0.0, 0.6};
  // Sweeps reach azimuth 0 at 10%, 50% and 90% of the period.
  const double offsets[] = {-0.2 * std::numbers::pi, std::numbers::pi,
                            0.2 * std::numbers::pi};
  for (int i = 0; i < 3; ++i) {
    SensorConfig s;
    s.mount = RigidTransform::FromTranslation({3.5, lateral[i], 1.0});
    s.azimuth_offset = offsets[i];
    sensors.push_back(s);
  }
  return sensors;
}

std::vector<AgentFrameTruth> GroundTruth::AgentFrames(int agent_id) const {
  std::vector<AgentFrameTruth> out;
  for (const auto& f : agent_frames) {
    if (f.agent_id == agent_id) out.push_back(f);
  }
  return out;
}

std::vector<SensorViewTruth> GroundTruth::Views(int agent_id, int frame_id) const {
  std::vector<SensorViewTruth> out;
  for (const auto& v : sensor_views) {
    if (v.agent_id == agent_id && v.frame_id == frame_id) out.push_back(v);
  }
  return out;
}

Scenario GenerateScenario(const ScenarioConfig& cfg) {
  cfg.Validate();
  Scenario sc;
  sc.config = cfg;
  Rng rng(cfg.rng_seed);

  const PlanarMotion ego = EgoMotion(cfg);
  sc.gt.ego_traj = SampleEgoTrajectory(ego, cfg.duration);
  const PoseTrajectory& traj = sc.gt.ego_traj;
  for (std::size_t i = 0; i < cfg.sensors.size(); ++i) {
    sc.calibs[static_cast<int>(i)] = cfg.sensors[i].mount;
  }

  std::vector<PlanarMotion> agents;
  for (const AgentConfig& a : cfg.agents) {
    agents.emplace_back(a.init_pos, a.speed_profile, a.heading_profile, cfg.duration);
  }
  auto agent_pose = [&](std::size_t a, double t) { return agents[a].Pose(t); };

  const double dt = cfg.frame_interval();
  const int frames = cfg.frame_count();
  std::vector<int> agent_point_totals(cfg.agents.size(), 0);

  for (int k = 0; k < frames; ++k) {
    const double t0 = k * dt;
    const double t_star = t0 + 0.5 * dt;
    const RigidTransform ego_star = traj.Interpolate(t_star);
    const RigidTransform vehicle_from_world = ego_star.inverse();

    std::vector<SampledPoint> frame_points;
    // Per agent, per sensor: collected indices into frame_points.
    std::vector<std::vector<std::vector<std::size_t>>> views(
        cfg.agents.size(), std::vector<std::vector<std::size_t>>(cfg.sensors.size()));

    auto emit = [&](std::size_t sensor, const Eigen::Vector3d& world_at_star,
                    auto world_at, int label) {
      const SensorConfig& sc_cfg = cfg.sensors[sensor];
      const RigidTransform sensor_star = ego_star * sc_cfg.mount;
      const Eigen::Vector3d in_sensor = sensor_star.inverse() * world_at_star;
      const double azimuth = std::atan2(in_sensor.y(), in_sensor.x());
      const double frac = WrapTwoPi(azimuth - sc_cfg.azimuth_offset) / kTwoPi;
      const double tau = t0 + sc_cfg.sweep_period * frac;
      const Eigen::Vector3d world = world_at(tau);
      SampledPoint sp;
      sp.point.position = (traj.Interpolate(tau) * sc_cfg.mount).inverse() * world;
      sp.point.timestamp = tau;
      sp.point.sensor_id = static_cast<int>(sensor);
      sp.point.frame_id = k;
      sp.label = label;
      sp.compensated = vehicle_from_world * world;
      frame_points.push_back(sp);
    };

    for (std::size_t s = 0; s < cfg.sensors.size(); ++s) {
      const SensorConfig& sensor = cfg.sensors[s];
      const Eigen::Vector3d sensor_pos = (ego_star * sensor.mount).translation();

      for (std::size_t a = 0; a < cfg.agents.size(); ++a) {
        const AgentConfig& agent = cfg.agents[a];
        if (!agent.visible_to.empty() &&
            std::find(agent.visible_to.begin(), agent.visible_to.end(),
                      static_cast<int>(s)) == agent.visible_to.end()) {
          continue;
        }
        const RigidTransform pose_star = agent_pose(a, t_star);
        const double range = (pose_star.translation() - sensor_pos).norm();
        if (range > sensor.max_range) continue;
        const double spacing = std::clamp(range * kTwoPi / sensor.rays_per_sweep,
                                          kMinPointSpacing, kMaxPointSpacing);
        const Eigen::Vector3d hull = agent.dims.array() - 2.0 * cfg.surface_inset;

        for (const Face& face : BoxFaces()) {
          const Eigen::Vector3d face_center =
              pose_star * (face.normal.cwiseProduct(0.5 * hull));
          const Eigen::Vector3d normal_world = pose_star.rotation() * face.normal;
          if ((sensor_pos - face_center).dot(normal_world) <= 0.0) continue;

          const double len_u = hull[face.axis_u];
          const double len_v = hull[face.axis_v];
          const int nu = std::max(2, static_cast<int>(std::ceil(len_u / spacing)));
          const int nv = std::max(2, static_cast<int>(std::ceil(len_v / spacing)));
          const double max_depth = std::min(cfg.surface_depth, hull[face.normal_axis]);
          for (int iu = 0; iu < nu; ++iu) {
            for (int iv = 0; iv < nv; ++iv) {
              Eigen::Vector3d body = face.normal.cwiseProduct(0.5 * hull);
              const double ju = Uniform01(rng) - 0.5;
              const double jv = Uniform01(rng) - 0.5;
              const double depth = Uniform01(rng);
              body[face.axis_u] =
                  -0.5 * len_u + (iu + 0.5 + cfg.grid_jitter * ju) * len_u / nu;
              body[face.axis_v] =
                  -0.5 * len_v + (iv + 0.5 + cfg.grid_jitter * jv) * len_v / nv;
              body -= face.normal * (max_depth * depth * depth);
              emit(s, pose_star * body,
                   [&](double tau) { return agent_pose(a, tau) * body; },
                   static_cast<int>(a));
              views[a][s].push_back(frame_points.size() - 1);
            }
          }
        }
      }

      const Eigen::Vector3d ego_pos = ego_star.translation();
      const double x_begin =
          std::ceil((ego_pos.x() - kGuardrailBehind) / kGuardrailSpacing) * kGuardrailSpacing;
      for (double offset : cfg.guardrail_offsets) {
        for (double x = x_begin; x <= ego_pos.x() + kGuardrailAhead; x += kGuardrailSpacing) {
          const Eigen::Vector3d world(x, offset, kGuardrailHeight);
          if ((world - sensor_pos).norm() > sensor.max_range) continue;
          emit(s, world, [&](double) { return world; }, kBackgroundLabel);
        }
      }
    }

    std::vector<TimedPoint> scan;
    std::vector<int> labels;
    for (const SampledPoint& sp : frame_points) {
      scan.push_back(sp.point);
      labels.push_back(sp.label);
    }
    Superframe sf = BuildSuperframe(std::span<const TimedPoint>(scan), traj,
                                    sc.calibs, t0, dt);

    for (std::size_t a = 0; a < cfg.agents.size(); ++a) {
      const RigidTransform pose_star = agent_pose(a, t_star);
      AgentFrameTruth truth;
      truth.agent_id = static_cast<int>(a);
      truth.frame_id = k;
      truth.t_star = t_star;
      truth.world_center = pose_star.translation();
      truth.world_heading = agents[a].Heading(t_star);
      truth.speed = agents[a].Speed(t_star);
      truth.vehicle_box.t_star = t_star;
      truth.vehicle_box.center = vehicle_from_world * truth.world_center;
      truth.vehicle_box.frame = BoxFrame::kVehicle;
      truth.vehicle_box.dims = cfg.agents[a].dims;
      truth.vehicle_box.heading = VehicleHeading(ego_star, truth.world_heading);
      truth.vehicle_box.track_id = static_cast<int>(a);
      truth.vehicle_box.object_class = cfg.agents[a].object_class;
      const Eigen::Vector3d axis = HeadingDirection(truth.vehicle_box.heading);

      std::vector<std::pair<double, double>> spans;
      for (std::size_t s = 0; s < cfg.sensors.size(); ++s) {
        const auto& idx = views[a][s];
        if (idx.empty()) continue;
        SensorViewTruth view;
        view.agent_id = static_cast<int>(a);
        view.frame_id = k;
        view.sensor_id = static_cast<int>(s);
        view.point_count = static_cast<int>(idx.size());
        view.span_min = std::numeric_limits<double>::infinity();
        view.span_max = -std::numeric_limits<double>::infinity();
        double tau_sum = 0.0;
        for (std::size_t i : idx) {
          tau_sum += frame_points[i].point.timestamp;
          const double along = frame_points[i].compensated.dot(axis);
          view.span_min = std::min(view.span_min, along);
          view.span_max = std::max(view.span_max, along);
        }
        view.mean_tau = tau_sum / static_cast<double>(idx.size());
        const RigidTransform pose_tau = agent_pose(a, view.mean_tau);
        view.box = truth.vehicle_box;
        view.box.center = vehicle_from_world * pose_tau.translation();
        view.box.heading = VehicleHeading(ego_star, agents[a].Heading(view.mean_tau));
        truth.point_count += view.point_count;
        spans.emplace_back(view.span_min, view.span_max);
        sc.gt.sensor_views.push_back(view);
      }
      std::sort(spans.begin(), spans.end());
      double reach = -std::numeric_limits<double>::infinity();
      for (const auto& [lo, hi] : spans) {
        if (lo > reach) ++truth.view_count;
        reach = std::max(reach, hi);
      }
      agent_point_totals[a] += truth.point_count;
      if (truth.point_count > 0) sc.gt.agent_frames.push_back(truth);
    }

    sc.scans.push_back(std::move(scan));
    sc.gt.point_labels.push_back(std::move(labels));
    sc.superframes.push_back(std::move(sf));
  }

  for (std::size_t a = 0; a < cfg.agents.size(); ++a) {
    if (agent_point_totals[a] == 0) {
      sc.warnings.push_back(
          fmt::format("agent {} is outside every sensor's range for the whole run", a));
    }
  }
  return sc;
}

std::map<int, AnnotatedTrack> CorruptAnnotations(const GroundTruth& gt,
                                                 const ScenarioConfig& cfg) {
  Rng rng(cfg.rng_seed ^ kAnnotationStream);
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  const double dt = cfg.frame_interval();

  std::map<int, std::vector<AgentFrameTruth>> by_agent;
  for (const auto& f : gt.agent_frames) by_agent[f.agent_id].push_back(f);

  std::map<int, AnnotatedTrack> tracks;
  for (auto& [agent, frames] : by_agent) {
    std::sort(frames.begin(), frames.end(),
              [](const auto& a, const auto& b) { return a.frame_id < b.frame_id; });
    std::vector<AnnotatedBox> boxes;
    for (const AgentFrameTruth& f : frames) {
      const double lon = normal(rng) * cfg.annotation_noise_sigma;
      const double lat = normal(rng) * cfg.annotation_noise_sigma;
      const double u = Uniform01(rng);
      const double bias = cfg.view_bias ? (u - 0.5) * std::abs(f.speed) * dt : 0.0;
      AnnotatedBox box = f.vehicle_box;
      const double h = box.heading;
      box.center += (lon + bias) * HeadingDirection(h) +
                    lat * HeadingDirection(h + 0.5 * std::numbers::pi);
      boxes.push_back(box);
    }

    // Longest run of consecutive frames.
    std::size_t best_begin = 0, best_len = 0;
    for (std::size_t i = 0; i < frames.size();) {
      std::size_t j = i + 1;
      while (j < frames.size() && frames[j].frame_id == frames[j - 1].frame_id + 1) ++j;
      if (j - i > best_len) {
        best_len = j - i;
        best_begin = i;
      }
      i = j;
    }
    if (best_len < 2) continue;
    std::vector<AnnotatedBox> run(boxes.begin() + best_begin,
                                  boxes.begin() + best_begin + best_len);
    tracks.emplace(agent, AnnotatedTrack(std::move(run), dt));
  }
  return tracks;
}

}  // namespace annorefine
