#include "annorefine/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "annorefine/errors.hpp"

namespace annorefine::io {
namespace {

std::ofstream OpenOut(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  return out;
}

std::ifstream OpenIn(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot read {}", path.string()));
  return in;
}

std::vector<std::string> Split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string StripCr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

// Reads a CSV file with an exact header; returns the data rows.
std::vector<std::vector<std::string>> ReadCsv(const fs::path& path,
                                              const std::string& header) {
  std::ifstream in = OpenIn(path);
  std::string line;
  if (!std::getline(in, line) || StripCr(line) != header) {
    throw DataError(fmt::format("{}: expected header '{}'", path.string(), header));
  }
  const std::size_t columns = Split(header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    line = StripCr(line);
    if (line.empty()) continue;
    auto cells = Split(line);
    if (cells.size() != columns) {
      throw DataError(fmt::format("{}: row {} has {} columns, expected {}",
                                  path.string(), rows.size() + 2, cells.size(), columns));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

double ToDouble(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(fmt::format("{}: '{}' is not a number", path.string(), s));
  }
}

int ToInt(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(fmt::format("{}: '{}' is not an integer", path.string(), s));
  }
}

Json Vec(const Eigen::Vector3d& v) {
  return Json::array({Round9(v.x()), Round9(v.y()), Round9(v.z())});
}

// Typed access that reports the offending key as a ConfigError.
template <typename T>
T Get(const Json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", key, e.what()));
  }
}

template <typename T>
void GetIf(const Json& j, const std::string& key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = Get<T>(j, key);
}

Eigen::Vector3d GetVec3(const Json& j, const std::string& key) {
  const auto v = Get<std::vector<double>>(j, key);
  if (v.size() != 3) throw ConfigError(fmt::format("{}: expected 3 numbers", key));
  return {v[0], v[1], v[2]};
}

PiecewiseLinear GetProfile(const Json& j, const std::string& key) {
  const Json& p = j.at(key);
  try {
    if (p.is_number()) return PiecewiseLinear::Constant(p.get<double>());
    std::vector<ProfileKnot> knots;
    for (const Json& k : p) {
      const auto pair = k.get<std::vector<double>>();
      if (pair.size() != 2) throw ConfigError(fmt::format("{}: knots are [t, value]", key));
      knots.push_back({pair[0], pair[1]});
    }
    return PiecewiseLinear(std::move(knots));
  } catch (const Json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", key, e.what()));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", key, e.what()));
  }
}

Json ProfileToJson(const PiecewiseLinear& p) {
  Json out = Json::array();
  for (const auto& k : p.knots()) out.push_back({Round9(k.t), Round9(k.value)});
  return out;
}

Json TransformToJson(const RigidTransform& t) {
  const Eigen::Quaterniond q = t.quaternion();
  return {{"translation", Vec(t.translation())},
          {"quaternion", {Round9(q.w()), Round9(q.x()), Round9(q.y()), Round9(q.z())}}};
}

RigidTransform TransformFromJson(const Json& j, const std::string& key) {
  const Eigen::Vector3d t = GetVec3(j, "translation");
  const auto q = Get<std::vector<double>>(j, "quaternion");
  if (q.size() != 4) throw ConfigError(fmt::format("{}.quaternion: expected 4 numbers", key));
  return RigidTransform::FromQuaternion(Eigen::Quaterniond(q[0], q[1], q[2], q[3]), t);
}

Json BoxJson(const AnnotatedBox& b) {
  return {{"center", Vec(b.center)},
          {"dims", Vec(b.dims)},
          {"heading", Round9(b.heading)}};
}

}  // namespace

std::string FormatNumber(double v) {
  if (v == 0.0) v = 0.0;  // drops the sign of negative zero
  return fmt::format("{:.9g}", v);
}

double Round9(double v) {
  if (!std::isfinite(v)) return v;
  if (v == 0.0) return 0.0;
  return std::stod(FormatNumber(v));
}

void WritePointsCsv(const fs::path& path, std::span<const TimedPoint> points) {
  std::ofstream out = OpenOut(path);
  out << "x,y,z,timestamp,sensor_id,frame_id\n";
  for (const TimedPoint& p : points) {
    out << FormatNumber(p.position.x()) << ',' << FormatNumber(p.position.y()) << ','
        << FormatNumber(p.position.z()) << ',' << FormatNumber(p.timestamp) << ','
        << p.sensor_id << ',' << p.frame_id << '\n';
  }
}

std::vector<TimedPoint> ReadPointsCsv(const fs::path& path) {
  std::vector<TimedPoint> points;
  for (const auto& r : ReadCsv(path, "x,y,z,timestamp,sensor_id,frame_id")) {
    TimedPoint p;
    p.position = {ToDouble(r[0], path), ToDouble(r[1], path), ToDouble(r[2], path)};
    p.timestamp = ToDouble(r[3], path);
    p.sensor_id = ToInt(r[4], path);
    p.frame_id = ToInt(r[5], path);
    if (!std::isfinite(p.timestamp)) throw DataError("point timestamp must be finite");
    points.push_back(p);
  }
  return points;
}

void WritePosesCsv(const fs::path& path, const PoseTrajectory& traj) {
  std::ofstream out = OpenOut(path);
  out << "t,tx,ty,tz,qw,qx,qy,qz\n";
  for (const PoseKnot& k : traj.knots()) {
    const Eigen::Quaterniond q = k.pose.quaternion();
    const Eigen::Vector3d& t = k.pose.translation();
    out << FormatNumber(k.t) << ',' << FormatNumber(t.x()) << ',' << FormatNumber(t.y())
        << ',' << FormatNumber(t.z()) << ',' << FormatNumber(q.w()) << ','
        << FormatNumber(q.x()) << ',' << FormatNumber(q.y()) << ',' << FormatNumber(q.z())
        << '\n';
  }
}

PoseTrajectory ReadPosesCsv(const fs::path& path) {
  std::vector<PoseKnot> knots;
  for (const auto& r : ReadCsv(path, "t,tx,ty,tz,qw,qx,qy,qz")) {
    std::array<double, 8> v{};
    for (std::size_t i = 0; i < 8; ++i) v[i] = ToDouble(r[i], path);
    try {
      knots.push_back({v[0], RigidTransform::FromQuaternion(
                                 Eigen::Quaterniond(v[4], v[5], v[6], v[7]),
                                 {v[1], v[2], v[3]})});
    } catch (const ConfigError& e) {
      throw DataError(fmt::format("{}: {}", path.string(), e.what()));
    }
  }
  try {
    return PoseTrajectory(std::move(knots));
  } catch (const ConfigError& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

Json CalibrationToJson(const CalibrationSet& calibs) {
  Json j = Json::object();
  for (const auto& [id, t] : calibs) j[std::to_string(id)] = TransformToJson(t);
  return j;
}

CalibrationSet CalibrationFromJson(const Json& j) {
  if (!j.is_object()) throw ConfigError("calibration: expected an object");
  CalibrationSet out;
  for (const auto& [key, value] : j.items()) {
    int id = 0;
    try {
      id = std::stoi(key);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("calibration key '{}' is not a sensor id", key));
    }
    out[id] = TransformFromJson(value, key);
  }
  return out;
}

Json BoxToJson(const AnnotatedBox& box) {
  Json j = {{"track_id", box.track_id},
            {"t_star", Round9(box.t_star)},
            {"frame", box.frame == BoxFrame::kWorld ? "world" : "vehicle"},
            {"center", Vec(box.center)},
            {"dims", Vec(box.dims)},
            {"heading", Round9(box.heading)}};
  if (!box.object_class.empty()) j["class"] = box.object_class;
  return j;
}

AnnotatedBox BoxFromJson(const Json& j) {
  AnnotatedBox b;
  b.track_id = Get<int>(j, "track_id");
  b.t_star = Get<double>(j, "t_star");
  const auto frame = Get<std::string>(j, "frame");
  if (frame == "world") {
    b.frame = BoxFrame::kWorld;
  } else if (frame == "vehicle") {
    b.frame = BoxFrame::kVehicle;
  } else {
    throw ConfigError(fmt::format("frame: unknown value '{}'", frame));
  }
  b.center = GetVec3(j, "center");
  b.dims = GetVec3(j, "dims");
  b.heading = Get<double>(j, "heading");
  GetIf(j, "class", b.object_class);
  ValidateBox(b);
  return b;
}

void WriteTracksJsonl(const fs::path& path, const std::vector<AnnotatedBox>& boxes) {
  std::ofstream out = OpenOut(path);
  for (const AnnotatedBox& b : boxes) out << BoxToJson(b).dump() << '\n';
}

std::map<int, std::vector<AnnotatedBox>> ReadTracksJsonl(const fs::path& path) {
  std::ifstream in = OpenIn(path);
  std::map<int, std::vector<AnnotatedBox>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (StripCr(line).empty()) continue;
    try {
      const AnnotatedBox b = BoxFromJson(Json::parse(line));
      out[b.track_id].push_back(b);
    } catch (const std::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  for (auto& [id, boxes] : out) {
    std::stable_sort(boxes.begin(), boxes.end(),
                     [](const auto& a, const auto& b) { return a.t_star < b.t_star; });
  }
  return out;
}

void WriteEstimatesCsv(const fs::path& path, const std::vector<EstimateRow>& rows) {
  std::ofstream out = OpenOut(path);
  out << "t,d,s,method,track_id\n";
  for (const EstimateRow& r : rows) {
    out << FormatNumber(r.t) << ',' << FormatNumber(r.d) << ',' << FormatNumber(r.s)
        << ',' << r.method << ',' << r.track_id << '\n';
  }
}

std::vector<EstimateRow> ReadEstimatesCsv(const fs::path& path) {
  std::vector<EstimateRow> rows;
  for (const auto& r : ReadCsv(path, "t,d,s,method,track_id")) {
    rows.push_back({ToDouble(r[0], path), ToDouble(r[1], path), ToDouble(r[2], path),
                    r[3], ToInt(r[4], path)});
  }
  return rows;
}

EstimatorConfig EstimatorConfigFromJson(const Json& j) {
  if (!j.is_object()) throw ConfigError("estimator config: expected an object");
  EstimatorConfig cfg;
  auto diag = [&](const char* key, Eigen::Matrix2d& m) {
    if (!j.contains(key)) return;
    const auto v = Get<std::vector<double>>(j, key);
    if (v.size() != 2) throw ConfigError(fmt::format("{}: expected 2 numbers", key));
    if (!(v[0] > 0.0 && v[1] > 0.0)) {
      throw ConfigError(fmt::format("{}: entries must be positive", key));
    }
    m = Eigen::Vector2d(v[0], v[1]).asDiagonal();
  };
  diag("q_diag", cfg.q);
  diag("psi_diag", cfg.psi);
  GetIf(j, "omega", cfg.omega);
  if (j.contains("horizon")) {
    const Json& h = j.at("horizon");
    if (h.is_string()) {
      if (h.get<std::string>() != "full") throw ConfigError("horizon: expected \"full\" or an integer");
      cfg.horizon.reset();
    } else if (h.is_number_integer()) {
      cfg.horizon = h.get<int>();
    } else {
      throw ConfigError("horizon: expected \"full\" or an integer");
    }
  }
  GetIf(j, "u_nominal", cfg.u_nominal);
  if (j.contains("speed_bounds") && !j.at("speed_bounds").is_null()) {
    const auto b = Get<std::vector<double>>(j, "speed_bounds");
    if (b.size() != 2) throw ConfigError("speed_bounds: expected [s_min, s_max]");
    cfg.speed_bounds = SpeedBounds{b[0], b[1]};
  }
  GetIf(j, "solver_tol", cfg.solver_tol);
  GetIf(j, "max_iter", cfg.max_iter);
  for (const auto& [key, value] : j.items()) {
    static const char* known[] = {"q_diag", "omega", "psi_diag", "horizon", "u_nominal",
                                  "speed_bounds", "solver_tol", "max_iter"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ConfigError(fmt::format("{}: unknown estimator config key", key));
    }
  }
  cfg.Validate();
  return cfg;
}

Json EstimatorConfigToJson(const EstimatorConfig& cfg) {
  Json j = {{"q_diag", {cfg.q(0, 0), cfg.q(1, 1)}},
            {"omega", cfg.omega},
            {"psi_diag", {cfg.psi(0, 0), cfg.psi(1, 1)}},
            {"u_nominal", cfg.u_nominal},
            {"solver_tol", cfg.solver_tol},
            {"max_iter", cfg.max_iter}};
  j["horizon"] = cfg.horizon ? Json(*cfg.horizon) : Json("full");
  j["speed_bounds"] = cfg.speed_bounds
                          ? Json::array({cfg.speed_bounds->min, cfg.speed_bounds->max})
                          : Json(nullptr);
  return j;
}

RefineParams RefineParamsFromJson(const Json& j) {
  if (!j.is_object()) throw ConfigError("refine params: expected an object");
  RefineParams p;
  GetIf(j, "gap_threshold", p.gap_threshold);
  GetIf(j, "min_cluster_points", p.min_cluster_points);
  GetIf(j, "roi_margin", p.roi_margin);
  GetIf(j, "anchor_margin", p.anchor_margin);
  GetIf(j, "min_refine_speed", p.min_refine_speed);
  if (j.contains("kde_bandwidth")) {
    const Json& b = j.at("kde_bandwidth");
    if (b.is_string() && b.get<std::string>() == "auto") {
      p.kde_bandwidth.reset();
    } else if (b.is_number()) {
      p.kde_bandwidth = b.get<double>();
    } else {
      throw ConfigError("kde_bandwidth: expected \"auto\" or a number");
    }
  }
  if (j.contains("tie_anchor")) {
    const auto a = Get<std::string>(j, "tie_anchor");
    if (a == "rear") {
      p.tie_anchor = Anchor::kRear;
    } else if (a == "front") {
      p.tie_anchor = Anchor::kFront;
    } else {
      throw ConfigError("tie_anchor: expected \"rear\" or \"front\"");
    }
  }
  p.Validate();
  return p;
}

ScenarioConfig ScenarioConfigFromJson(const Json& j) {
  if (!j.is_object()) throw ConfigError("scenario config: expected an object");
  ScenarioConfig cfg;
  GetIf(j, "duration", cfg.duration);
  GetIf(j, "frame_rate", cfg.frame_rate);
  if (j.contains("ego_speed_profile")) cfg.ego_speed_profile = GetProfile(j, "ego_speed_profile");
  GetIf(j, "ego_yaw_rate", cfg.ego_yaw_rate);
  GetIf(j, "annotation_noise_sigma", cfg.annotation_noise_sigma);
  GetIf(j, "view_bias", cfg.view_bias);
  GetIf(j, "rng_seed", cfg.rng_seed);
  GetIf(j, "surface_inset", cfg.surface_inset);
  GetIf(j, "surface_depth", cfg.surface_depth);
  GetIf(j, "grid_jitter", cfg.grid_jitter);
  GetIf(j, "guardrail_offsets", cfg.guardrail_offsets);

  if (j.contains("agents")) {
    cfg.agents.clear();
    const Json& agents = j.at("agents");
    if (!agents.is_array()) throw ConfigError("agents: expected an array");
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const Json& a = agents[i];
      const std::string prefix = fmt::format("agents[{}]", i);
      AgentConfig ac;
      try {
        if (a.contains("init_pos")) ac.init_pos = GetVec3(a, "init_pos");
        if (a.contains("dims")) ac.dims = GetVec3(a, "dims");
        if (a.contains("speed_profile")) ac.speed_profile = GetProfile(a, "speed_profile");
        if (a.contains("heading_profile")) ac.heading_profile = GetProfile(a, "heading_profile");
        GetIf(a, "class", ac.object_class);
        GetIf(a, "visible_to", ac.visible_to);
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}.{}", prefix, e.what()));
      }
      cfg.agents.push_back(std::move(ac));
    }
  }
  if (j.contains("sensors")) {
    cfg.sensors.clear();
    const Json& sensors = j.at("sensors");
    if (!sensors.is_array()) throw ConfigError("sensors: expected an array");
    for (std::size_t i = 0; i < sensors.size(); ++i) {
      const Json& s = sensors[i];
      const std::string prefix = fmt::format("sensors[{}]", i);
      SensorConfig sc;
      try {
        if (s.contains("mount")) sc.mount = TransformFromJson(s.at("mount"), "mount");
        GetIf(s, "sweep_period", sc.sweep_period);
        GetIf(s, "azimuth_offset", sc.azimuth_offset);
        GetIf(s, "rays_per_sweep", sc.rays_per_sweep);
        GetIf(s, "max_range", sc.max_range);
      } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}.{}", prefix, e.what()));
      }
      cfg.sensors.push_back(sc);
    }
  }
  cfg.Validate();
  return cfg;
}

Json ScenarioConfigToJson(const ScenarioConfig& cfg) {
  Json agents = Json::array();
  for (const AgentConfig& a : cfg.agents) {
    agents.push_back({{"init_pos", Vec(a.init_pos)},
                      {"dims", Vec(a.dims)},
                      {"speed_profile", ProfileToJson(a.speed_profile)},
                      {"heading_profile", ProfileToJson(a.heading_profile)},
                      {"class", a.object_class},
                      {"visible_to", a.visible_to}});
  }
  Json sensors = Json::array();
  for (const SensorConfig& s : cfg.sensors) {
    sensors.push_back({{"mount", TransformToJson(s.mount)},
                       {"sweep_period", Round9(s.sweep_period)},
                       {"azimuth_offset", Round9(s.azimuth_offset)},
                       {"rays_per_sweep", s.rays_per_sweep},
                       {"max_range", Round9(s.max_range)}});
  }
  std::vector<double> rails;
  for (double r : cfg.guardrail_offsets) rails.push_back(Round9(r));
  return {{"duration", Round9(cfg.duration)},
          {"frame_rate", Round9(cfg.frame_rate)},
          {"ego_speed_profile", ProfileToJson(cfg.ego_speed_profile)},
          {"ego_yaw_rate", Round9(cfg.ego_yaw_rate)},
          {"agents", agents},
          {"sensors", sensors},
          {"annotation_noise_sigma", Round9(cfg.annotation_noise_sigma)},
          {"view_bias", cfg.view_bias},
          {"rng_seed", cfg.rng_seed},
          {"surface_inset", Round9(cfg.surface_inset)},
          {"surface_depth", Round9(cfg.surface_depth)},
          {"grid_jitter", Round9(cfg.grid_jitter)},
          {"guardrail_offsets", rails}};
}

Json ReadJsonFile(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read {}", path.string()));
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void WriteJsonFile(const fs::path& path, const Json& j) {
  std::ofstream out = OpenOut(path);
  out << j.dump(2) << '\n';
}

void WriteRefinedJsonl(const fs::path& path, const std::vector<RefinedTrack>& tracks) {
  std::ofstream out = OpenOut(path);
  for (const RefinedTrack& t : tracks) {
    for (const FrameRefinement& f : t.frames) {
      for (std::size_t i = 0; i < f.pseudo_boxes.size(); ++i) {
        const PseudoBox& pb = f.pseudo_boxes[i];
        Json j = BoxToJson(pb.box);
        j["pseudo_index"] = i;
        j["source_cluster"] = pb.source_cluster >= 0 ? Json(pb.source_cluster) : Json(nullptr);
        j["applied_shift"] = Vec(pb.applied_shift);
        if (pb.source_cluster >= 0 &&
            pb.source_cluster < static_cast<int>(f.clusters.size())) {
          const ViewCluster& c = f.clusters[pb.source_cluster];
          j["cluster_mean_tau"] = Round9(c.mean_tau);
          j["cluster_points"] = c.point_indices;
        }
        j["anchored"] = f.anchored;
        j["fallback"] = f.fallback;
        out << j.dump() << '\n';
      }
    }
  }
}

std::vector<RefinedTrack> ReadRefinedJsonl(const fs::path& path) {
  std::ifstream in = OpenIn(path);
  std::map<int, std::vector<FrameRefinement>> by_track;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (StripCr(line).empty()) continue;
    try {
      const Json j = Json::parse(line);
      PseudoBox pb;
      pb.box = BoxFromJson(j);
      pb.source_cluster = j.at("source_cluster").is_null() ? -1 : j.at("source_cluster").get<int>();
      pb.applied_shift = GetVec3(j, "applied_shift");
      auto& frames = by_track[pb.box.track_id];
      if (frames.empty() || Get<int>(j, "pseudo_index") == 0) {
        FrameRefinement f;
        f.t_star = pb.box.t_star;
        f.anchored = Get<bool>(j, "anchored");
        f.fallback = j.value("fallback", false);
        frames.push_back(f);
      }
      FrameRefinement& f = frames.back();
      if (pb.source_cluster >= 0 && j.contains("cluster_points")) {
        if (f.clusters.size() <= static_cast<std::size_t>(pb.source_cluster)) {
          f.clusters.resize(pb.source_cluster + 1);
        }
        ViewCluster& c = f.clusters[pb.source_cluster];
        c.point_indices = Get<std::vector<int>>(j, "cluster_points");
        c.mean_tau = Get<double>(j, "cluster_mean_tau");
      }
      f.pseudo_boxes.push_back(pb);
    } catch (const std::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  std::vector<RefinedTrack> out;
  for (auto& [id, frames] : by_track) out.push_back({id, std::move(frames)});
  return out;
}

void WriteGroundTruthJsonl(const fs::path& path, const GroundTruth& gt) {
  std::ofstream out = OpenOut(path);
  for (const AgentFrameTruth& f : gt.agent_frames) {
    Json j = {{"kind", "agent_frame"},
              {"agent_id", f.agent_id},
              {"frame_id", f.frame_id},
              {"t_star", Round9(f.t_star)},
              {"world_center", Vec(f.world_center)},
              {"world_heading", Round9(f.world_heading)},
              {"speed", Round9(f.speed)},
              {"view_count", f.view_count},
              {"point_count", f.point_count},
              {"box", BoxJson(f.vehicle_box)}};
    out << j.dump() << '\n';
  }
  for (const SensorViewTruth& v : gt.sensor_views) {
    Json j = {{"kind", "sensor_view"},
              {"agent_id", v.agent_id},
              {"frame_id", v.frame_id},
              {"sensor_id", v.sensor_id},
              {"mean_tau", Round9(v.mean_tau)},
              {"span", {Round9(v.span_min), Round9(v.span_max)}},
              {"point_count", v.point_count},
              {"box", BoxJson(v.box)}};
    out << j.dump() << '\n';
  }
  for (std::size_t k = 0; k < gt.point_labels.size(); ++k) {
    Json j = {{"kind", "point_labels"}, {"frame_id", k}, {"labels", gt.point_labels[k]}};
    out << j.dump() << '\n';
  }
}

GroundTruth ReadGroundTruthJsonl(const fs::path& path) {
  std::ifstream in = OpenIn(path);
  GroundTruth gt;
  std::string line;
  int lineno = 0;
  auto read_box = [](const Json& j, AnnotatedBox& b) {
    b.center = GetVec3(j, "center");
    b.dims = GetVec3(j, "dims");
    b.heading = Get<double>(j, "heading");
    b.frame = BoxFrame::kVehicle;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (StripCr(line).empty()) continue;
    try {
      const Json j = Json::parse(line);
      const auto kind = Get<std::string>(j, "kind");
      if (kind == "agent_frame") {
        AgentFrameTruth f;
        f.agent_id = Get<int>(j, "agent_id");
        f.frame_id = Get<int>(j, "frame_id");
        f.t_star = Get<double>(j, "t_star");
        f.world_center = GetVec3(j, "world_center");
        f.world_heading = Get<double>(j, "world_heading");
        f.speed = Get<double>(j, "speed");
        f.view_count = Get<int>(j, "view_count");
        f.point_count = Get<int>(j, "point_count");
        read_box(j.at("box"), f.vehicle_box);
        f.vehicle_box.t_star = f.t_star;
        f.vehicle_box.track_id = f.agent_id;
        gt.agent_frames.push_back(f);
      } else if (kind == "sensor_view") {
        SensorViewTruth v;
        v.agent_id = Get<int>(j, "agent_id");
        v.frame_id = Get<int>(j, "frame_id");
        v.sensor_id = Get<int>(j, "sensor_id");
        v.mean_tau = Get<double>(j, "mean_tau");
        const auto span = Get<std::vector<double>>(j, "span");
        if (span.size() != 2) throw DataError("span: expected 2 numbers");
        v.span_min = span[0];
        v.span_max = span[1];
        v.point_count = Get<int>(j, "point_count");
        read_box(j.at("box"), v.box);
        v.box.track_id = v.agent_id;
        gt.sensor_views.push_back(v);
      } else if (kind == "point_labels") {
        const auto frame = Get<std::size_t>(j, "frame_id");
        if (gt.point_labels.size() <= frame) gt.point_labels.resize(frame + 1);
        gt.point_labels[frame] = Get<std::vector<int>>(j, "labels");
      } else {
        throw DataError(fmt::format("unknown record kind '{}'", kind));
      }
    } catch (const std::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return gt;
}

void WriteBundle(const fs::path& dir, const Scenario& scenario,
                 const std::map<int, AnnotatedTrack>& tracks, bool with_timestamp) {
  fs::create_directories(dir);
  WritePosesCsv(dir / "poses.csv", scenario.gt.ego_traj);
  WriteJsonFile(dir / "calib.json", CalibrationToJson(scenario.calibs));
  std::vector<TimedPoint> all;
  for (const auto& scan : scenario.scans) all.insert(all.end(), scan.begin(), scan.end());
  WritePointsCsv(dir / "points.csv", all);
  std::vector<AnnotatedBox> boxes;
  for (const auto& [id, track] : tracks) {
    boxes.insert(boxes.end(), track.boxes().begin(), track.boxes().end());
  }
  WriteTracksJsonl(dir / "tracks.jsonl", boxes);
  WriteGroundTruthJsonl(dir / "gt.jsonl", scenario.gt);

  Json manifest = {{"config", ScenarioConfigToJson(scenario.config)},
                   {"seed", scenario.config.rng_seed},
                   {"frame_count", scenario.config.frame_count()},
                   {"frame_interval", Round9(scenario.config.frame_interval())},
                   {"point_count", all.size()},
                   {"track_count", tracks.size()},
                   {"warnings", scenario.warnings}};
  if (with_timestamp) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    manifest["created_unix"] = std::chrono::duration_cast<std::chrono::seconds>(now).count();
  }
  WriteJsonFile(dir / "manifest.json", manifest);
}

Bundle ReadBundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw ConfigError(fmt::format("bundle directory {} does not exist", dir.string()));
  }
  Bundle b;
  b.dir = dir;
  if (fs::exists(dir / "manifest.json")) {
    b.manifest = ReadJsonFile(dir / "manifest.json");
    if (b.manifest.contains("frame_interval")) {
      b.frame_interval = Get<double>(b.manifest, "frame_interval");
    }
  }
  b.poses = ReadPosesCsv(dir / "poses.csv");
  try {
    b.calibs = CalibrationFromJson(ReadJsonFile(dir / "calib.json"));
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  b.points = ReadPointsCsv(dir / "points.csv");
  b.tracks = ReadTracksJsonl(dir / "tracks.jsonl");
  return b;
}

std::vector<Superframe> BuildBundleSuperframes(const Bundle& bundle) {
  int frames = 0;
  if (bundle.manifest.contains("frame_count")) {
    frames = Get<int>(bundle.manifest, "frame_count");
  }
  std::map<int, std::vector<TimedPoint>> by_frame;
  for (const TimedPoint& p : bundle.points) {
    if (p.frame_id < 0) throw DataError("negative frame id in points");
    by_frame[p.frame_id].push_back(p);
    frames = std::max(frames, p.frame_id + 1);
  }
  std::vector<Superframe> out;
  out.reserve(frames);
  for (int k = 0; k < frames; ++k) {
    const auto it = by_frame.find(k);
    const std::vector<TimedPoint> empty;
    const auto& pts = it == by_frame.end() ? empty : it->second;
    out.push_back(BuildSuperframe(std::span<const TimedPoint>(pts), bundle.poses,
                                  bundle.calibs, k * bundle.frame_interval,
                                  bundle.frame_interval));
  }
  return out;
}

}  // namespace annorefine::io
