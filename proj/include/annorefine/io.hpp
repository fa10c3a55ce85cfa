#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "annorefine/estimators.hpp"
#include "annorefine/geometry.hpp"
#include "annorefine/refine.hpp"
#include "annorefine/synth.hpp"
#include "annorefine/track_model.hpp"

namespace annorefine::io {

namespace fs = std::filesystem;
using Json = nlohmann::json;

// Every floating-point value written by this module uses 9 significant digits.
std::string FormatNumber(double v);
double Round9(double v);

// x,y,z,timestamp,sensor_id,frame_id
void WritePointsCsv(const fs::path& path, std::span<const TimedPoint> points);
std::vector<TimedPoint> ReadPointsCsv(const fs::path& path);

// t,tx,ty,tz,qw,qx,qy,qz
void WritePosesCsv(const fs::path& path, const PoseTrajectory& traj);
PoseTrajectory ReadPosesCsv(const fs::path& path);

// {"<sensor_id>": {"translation": [3], "quaternion": [w, x, y, z]}}
Json CalibrationToJson(const CalibrationSet& calibs);
CalibrationSet CalibrationFromJson(const Json& j);

Json BoxToJson(const AnnotatedBox& box);
AnnotatedBox BoxFromJson(const Json& j);
void WriteTracksJsonl(const fs::path& path, const std::vector<AnnotatedBox>& boxes);
// Boxes grouped by track id, each group sorted by time.
std::map<int, std::vector<AnnotatedBox>> ReadTracksJsonl(const fs::path& path);

struct EstimateRow {
  double t = 0.0;
  double d = 0.0;
  double s = 0.0;
  std::string method;
  int track_id = 0;
};
// t,d,s,method,track_id
void WriteEstimatesCsv(const fs::path& path, const std::vector<EstimateRow>& rows);
std::vector<EstimateRow> ReadEstimatesCsv(const fs::path& path);

// Config parsers throw ConfigError naming the offending key. Missing keys
// keep their defaults.
EstimatorConfig EstimatorConfigFromJson(const Json& j);
Json EstimatorConfigToJson(const EstimatorConfig& cfg);
RefineParams RefineParamsFromJson(const Json& j);
ScenarioConfig ScenarioConfigFromJson(const Json& j);
Json ScenarioConfigToJson(const ScenarioConfig& cfg);

Json ReadJsonFile(const fs::path& path);
void WriteJsonFile(const fs::path& path, const Json& j);

struct RefinedTrack {
  int track_id = 0;
  std::vector<FrameRefinement> frames;
};
void WriteRefinedJsonl(const fs::path& path, const std::vector<RefinedTrack>& tracks);
// Rebuilds per-track frames. Clusters keep only their point indices and
// mean timestamp.
std::vector<RefinedTrack> ReadRefinedJsonl(const fs::path& path);

void WriteGroundTruthJsonl(const fs::path& path, const GroundTruth& gt);
// ego_traj is not part of gt.jsonl; it is read from poses.csv.
GroundTruth ReadGroundTruthJsonl(const fs::path& path);

// Scenario bundle directory: poses.csv, calib.json, points.csv, tracks.jsonl,
// gt.jsonl, manifest.json.
void WriteBundle(const fs::path& dir, const Scenario& scenario,
                 const std::map<int, AnnotatedTrack>& tracks, bool with_timestamp);

struct Bundle {
  fs::path dir;
  Json manifest;
  double frame_interval = 0.1;
  PoseTrajectory poses;
  CalibrationSet calibs;
  std::vector<TimedPoint> points;
  std::map<int, std::vector<AnnotatedBox>> tracks;
};
Bundle ReadBundle(const fs::path& dir);

// Deskews the bundle's points frame by frame. Frame k covers
// [k * frame_interval, (k + 1) * frame_interval].
std::vector<Superframe> BuildBundleSuperframes(const Bundle& bundle);

}  // namespace annorefine::io
