// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "annorefine/errors.hpp"
#include "annorefine/estimators.hpp"
#include "annorefine/geometry.hpp"
#include "annorefine/refine.hpp"
#include "annorefine/synth.hpp"
#include "annorefine/track_model.hpp"
#include "cli.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "tempdir.hpp"

using namespace annorefine;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

// Q = I, Omega = 1 and an uninformative speed prior.
EstimatorConfig PipelineConfig() {
  EstimatorConfig cfg;
  cfg.psi = Eigen::Vector2d(1.0, 1e4).asDiagonal();
  return cfg;
}

struct TrackData {
  AnnotatedTrack track;
  MeasurementSeries y;
};

TrackData Measure(const Scenario& sc, const ScenarioConfig& cfg, int agent = 0) {
  TrackData out;
  out.track = CorruptAnnotations(sc.gt, cfg).at(agent);
  out.y = ProjectToPath(BoxesToWorld(out.track, sc.gt.ego_traj).track);
  return out;
}

// A 20 m/s agent kept 25 m ahead of the ego and seen by one sparse sensor.
ScenarioConfig SpeedScene(std::uint64_t seed, double sigma, bool view_bias) {
  ScenarioConfig cfg;
  cfg.rng_seed = seed;
  cfg.annotation_noise_sigma = sigma;
  cfg.view_bias = view_bias;
  cfg.ego_speed_profile = PiecewiseLinear::Constant(20.0);
  cfg.agents.front().speed_profile = PiecewiseLinear::Constant(20.0);
  cfg.sensors.resize(1);
  cfg.sensors.front().rays_per_sweep = 60;
  cfg.guardrail_offsets.clear();
  return cfg;
}

double Rmse(const std::vector<double>& s, double truth) {
  double ss = 0.0;
  for (double v : s) ss += (v - truth) * (v - truth);
  return std::sqrt(ss / static_cast<double>(s.size()));
}

double MaxDeviation(const std::vector<double>& s, double truth) {
  double m = 0.0;
  for (double v : s) m = std::max(m, std::abs(v - truth));
  return m;
}

Outcome RtsEquivalence() {
  const auto start = Clock::now();
  gen::Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.Int(5, 200);
    const MeasurementSeries y = gen::Series(rng, n, rng.Uniform(0, 35), rng.Uniform(0.05, 1.0));
    const EstimatorConfig cfg;
    const Prior prior = DefaultPrior(y);
    worst = std::max(worst, oracle::MaxStateDiff(MheSolve(y, cfg, prior).states,
                                                 RtsSmooth(y, cfg, prior).states));
  }
  const double t = Seconds(start);
  return {worst <= 1e-6 && t < 10.0,
          fmt::format("max |mhe - rts| = {:.3g} over 100 tracks, {:.2f} s", worst, t)};
}

Outcome QpOracles() {
  gen::Rng rng(102);
  double dense = 0.0, faces = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const MeasurementSeries y =
        gen::Series(rng, rng.Int(2, 80), rng.Uniform(-30, 30), 0.5, 0.1, 0.05);
    const EstimatorConfig cfg = gen::RandomConfig(rng);
    const Prior prior{{rng.Uniform(-2, 2), rng.Uniform(-30, 30)}};
    dense = std::max(dense, oracle::MaxStateDiff(MheSolve(y, cfg, prior).states,
                                                 oracle::DenseSolve(y, cfg, prior)));
  }
  int with_active = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const MeasurementSeries y = gen::Series(rng, rng.Int(2, 7), rng.Uniform(5, 25), 0.8);
    EstimatorConfig cfg = gen::RandomConfig(rng);
    const double lo = rng.Uniform(0, 15);
    cfg.speed_bounds = SpeedBounds{lo, lo + rng.Uniform(0.5, 8)};
    const Prior prior{{0.0, rng.Uniform(0, 30)}};
    const StateEstimate est = MheSolve(y, cfg, prior);
    if (!est.active_constraints.empty()) ++with_active;
    faces = std::max(faces, oracle::MaxStateDiff(est.states, oracle::EnumerateFaces(y, cfg, prior)));
  }
  return {dense <= 1e-6 && faces <= 1e-5 && with_active > 0,
          fmt::format("dense {:.3g} (50 instances), bounded {:.3g} (50 instances, {} with "
                      "active bounds)",
                      dense, faces, with_active)};
}

Outcome SpeedRecovery() {
  const auto start = Clock::now();
  const EstimatorConfig cfg = PipelineConfig();
  double worst = 0.0;
  int beats = 0, seeds = 0;
  bool lengths = true;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const ScenarioConfig sc_cfg = SpeedScene(seed, 0.2, true);
    const TrackData td = Measure(GenerateScenario(sc_cfg), sc_cfg);
    lengths = lengths && td.y.size() == 100;
    const double mhe = Rmse(MheSolve(td.y, cfg, DefaultPrior(td.y)).speeds(), 20.0);
    const double naive = Rmse(NaiveSpeed(td.y), 20.0);
    worst = std::max(worst, mhe);
    beats += mhe <= naive;
    ++seeds;
  }
  const double t = Seconds(start);
  return {lengths && worst <= 0.5 && beats == seeds && t < 5.0,
          fmt::format("worst MHE RMSE {:.3f} m/s, MHE <= naive on {}/{} seeds, n = 100: {}, "
                      "{:.2f} s",
                      worst, beats, seeds, lengths ? "yes" : "no", t)};
}

Outcome Smoothness() {
  const EstimatorConfig cfg = PipelineConfig();
  int smoother = 0;
  for (std::uint64_t seed = 1001; seed <= 1100; ++seed) {
    const ScenarioConfig sc_cfg = SpeedScene(seed, 0.2, true);
    const TrackData td = Measure(GenerateScenario(sc_cfg), sc_cfg);
    const double mhe = TotalVariation(MheSolve(td.y, cfg, DefaultPrior(td.y)).speeds());
    const double naive = TotalVariation(NaiveSpeed(td.y));
    smoother += mhe < naive;
  }
  return {smoother >= 95, fmt::format("MHE TV < naive TV on {}/100 tracks", smoother)};
}

Outcome OutlierRobustness() {
  ScenarioConfig sc_cfg = SpeedScene(7, 0.05, false);
  const Scenario sc = GenerateScenario(sc_cfg);
  const AnnotatedTrack clean = CorruptAnnotations(sc.gt, sc_cfg).at(0);
  std::vector<AnnotatedBox> boxes = clean.boxes();
  AnnotatedBox& hit = boxes[boxes.size() / 2];
  hit.center += 1.5 * HeadingDirection(hit.heading);
  const AnnotatedTrack track(std::move(boxes), clean.delta_t());
  const MeasurementSeries y = ProjectToPath(BoxesToWorld(track, sc.gt.ego_traj).track);
  const double naive = MaxDeviation(NaiveSpeed(y), 20.0);
  const double mhe = MaxDeviation(MheSolve(y, PipelineConfig(), DefaultPrior(y)).speeds(), 20.0);
  return {naive >= 10.0 && mhe <= 2.0,
          fmt::format("naive spike {:.2f} m/s, MHE max deviation {:.3f} m/s", naive, mhe)};
}

Outcome CompensationRoundTrip() {
  gen::Rng rng(106);
  Superframe sf;
  sf.t_star = 12.35;
  sf.delta_t = 0.1;
  for (int i = 0; i < 100000; ++i) {
    sf.points.push_back({rng.Vec3(80.0), rng.Uniform(12.3, 12.4), rng.Int(0, 2), 123});
  }
  std::vector<int> idx(sf.points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  const double speed = 23.7, heading = -0.8;
  const auto comp = SpeedCompensate(sf, idx, speed, heading);
  double worst = 0.0;
  for (std::size_t i = 0; i < comp.size(); ++i) {
    const TimedPoint& p = sf.points[i];
    const Eigen::Vector3d back =
        comp[i] + ObjectDisplacement(p.timestamp, sf.t_star, speed, heading);
    worst = std::max(worst, (back - p.position).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-12, fmt::format("max round-trip error {:.3g} m on 1e5 points", worst)};
}

Outcome ViewDisplacement() {
  ScenarioConfig cfg;
  cfg.duration = 1.0;
  cfg.frame_rate = 5.0;
  cfg.ego_speed_profile = PiecewiseLinear::Constant(20.0);
  cfg.agents.front().speed_profile = PiecewiseLinear::Constant(20.0);
  cfg.guardrail_offsets.clear();
  cfg.grid_jitter = 0.0;
  cfg.surface_depth = 0.0;
  cfg.sensors.clear();
  // Co-located sensors whose sweeps reach straight ahead 100 ms apart.
  for (double offset : {-0.5 * std::numbers::pi, 0.5 * std::numbers::pi}) {
    SensorConfig s;
    s.mount = RigidTransform::FromTranslation({3.5, 0.0, 1.0});
    s.sweep_period = 0.2;
    s.azimuth_offset = offset;
    cfg.sensors.push_back(s);
  }
  const Scenario sc = GenerateScenario(cfg);

  double worst = 0.0, worst_dt = 0.0, worst_view = 0.0;
  std::size_t pairs = 0;
  for (std::size_t k = 0; k < sc.superframes.size(); ++k) {
    std::vector<const TimedPoint*> by_sensor[2];
    for (std::size_t i = 0; i < sc.superframes[k].points.size(); ++i) {
      if (sc.gt.point_labels[k][i] != 0) continue;
      const TimedPoint& p = sc.superframes[k].points[i];
      by_sensor[p.sensor_id].push_back(&p);
    }
    if (by_sensor[0].empty() || by_sensor[0].size() != by_sensor[1].size()) return {false, "views differ in size"};
    for (std::size_t i = 0; i < by_sensor[0].size(); ++i) {
      const TimedPoint& a = *by_sensor[0][i];
      const TimedPoint& b = *by_sensor[1][i];
      worst = std::max(worst, std::abs((b.position - a.position).norm() - 2.0));
      worst_dt = std::max(worst_dt, std::abs(b.timestamp - a.timestamp - 0.1));
      ++pairs;
    }
    const auto views = sc.gt.Views(0, static_cast<int>(k));
    if (views.size() != 2) return {false, "expected two sensor views"};
    worst_view = std::max(worst_view,
                          std::abs((views[1].box.center - views[0].box.center).norm() - 2.0));
  }
  return {worst <= 1e-6 && worst_view <= 1e-6 && worst_dt <= 1e-9,
          fmt::format("|displacement - 2 m| <= {:.3g} over {} point pairs, view boxes {:.3g}, "
                      "tau separation error {:.3g} s",
                      worst, pairs, worst_view, worst_dt)};
}

Outcome RefinementContainment() {
  ScenarioConfig cfg;
  cfg.annotation_noise_sigma = 0.03;
  const Scenario sc = GenerateScenario(cfg);
  const TrackData td = Measure(sc, cfg);
  const StateEstimate est = MheSolve(td.y, PipelineConfig(), DefaultPrior(td.y));
  RefineParams params;
  params.roi_margin = 1.5;
  const auto refined = RefineTrack(td.track, sc.superframes, est, params);
  const MetricsReport m = Evaluate(est, refined, sc.gt, 0, &td.track, sc.superframes);
  int coverage_drops = 0;
  for (const FrameMetrics& f : m.frames) coverage_drops += f.pseudo_coverage < f.original_coverage;
  return {m.cluster_containment_min >= 0.99 && m.view_count_mismatches == 0 &&
              coverage_drops == 0,
          fmt::format("min containment {:.4f}, count mismatches {}/{}, frames with lower "
                      "coverage {} (mean coverage {:.3f} vs {:.3f})",
                      m.cluster_containment_min, m.view_count_mismatches, m.frames.size(),
                      coverage_drops, m.coverage_mean, m.original_coverage_mean)};
}

Outcome StaticWorld() {
  gen::Rng rng(109);
  std::vector<PoseKnot> knots;
  for (int i = 0; i <= 100; ++i) {
    const double t = 0.05 * i;
    const Eigen::Quaterniond q = Eigen::AngleAxisd(0.2 * t + 0.05 * std::sin(3 * t), Eigen::Vector3d::UnitZ()) *
                                 Eigen::AngleAxisd(0.02 * std::sin(5 * t), Eigen::Vector3d::UnitX()) *
                                 Eigen::AngleAxisd(0.03 * std::cos(4 * t), Eigen::Vector3d::UnitY());
    knots.push_back({t, RigidTransform::FromQuaternion(
                            q, {25.0 * t, 3.0 * std::sin(t), 0.1 * std::cos(2 * t)})});
  }
  const PoseTrajectory traj(knots);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Eigen::Quaterniond qc = Eigen::AngleAxisd(rng.Uniform(-M_PI, M_PI), Eigen::Vector3d::UnitZ()) *
                                  Eigen::AngleAxisd(rng.Uniform(-0.1, 0.1), Eigen::Vector3d::UnitY());
    const RigidTransform calib = RigidTransform::FromQuaternion(qc, rng.Vec3(2.0));
    const Eigen::Vector3d landmark = rng.Vec3(100.0);
    const double t0 = rng.Uniform(0.0, 4.8);
    const double t_star = t0 + 0.05;
    TimedPoint p;
    p.timestamp = rng.Uniform(t0, t0 + 0.1);
    p.position = (traj.Interpolate(p.timestamp) * calib).inverse() * landmark;
    const Eigen::Vector3d expect = traj.Interpolate(t_star).inverse() * landmark;
    worst = std::max(worst, (MotionCompensate(p, traj, calib, t_star) - expect).norm());
  }
  return {worst <= 1e-6, fmt::format("max landmark disagreement {:.3g} m over 10000 observations",
                                     worst)};
}

int Cli(const std::vector<std::string>& args, std::string* log) {
  std::vector<const char*> argv{"annorefine"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::Run(static_cast<int>(argv.size()), argv.data(), out, err);
  *log += out.str() + err.str();
  return code;
}

Outcome EndToEndDeterminism() {
  std::vector<std::string> files{"bundle/points.csv", "bundle/poses.csv",  "bundle/tracks.jsonl",
                                 "bundle/gt.jsonl",   "bundle/calib.json", "bundle/manifest.json",
                                 "out/estimates.csv", "out/refined.jsonl", "out/metrics.csv",
                                 "out/metrics_frames.csv"};
  testing_fs::TempDir runs[2];
  for (auto& dir : runs) {
    const std::string bundle = (dir / "bundle").string(), out = (dir / "out").string();
    std::string log;
    const bool ok =
        Cli({"--out", bundle, "--seed", "11", "--no-timestamp", "synth"}, &log) == 0 &&
        Cli({"--out", out, "--config", CONFIG_DIR "/estimator.json", "estimate", "--bundle",
             bundle, "--methods", "mhe,mhe_receding,kf,rts,naive"}, &log) == 0 &&
        Cli({"--out", out, "--config", CONFIG_DIR "/refine.json", "refine", "--bundle",
             bundle}, &log) == 0 &&
        Cli({"--out", out, "eval", "--bundle", bundle, "--refined", out + "/refined.jsonl"},
            &log) == 0;
    if (!ok) return {false, "pipeline failed: " + log};
  }
  int identical = 0;
  for (const auto& f : files) {
    const std::string a = testing_fs::ReadText(runs[0] / f);
    identical += !a.empty() && a == testing_fs::ReadText(runs[1] / f);
  }
  return {identical == static_cast<int>(files.size()),
          fmt::format("{}/{} output files byte-identical across two runs", identical,
                      files.size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"MHE equals RTS smoother on unconstrained tracks", RtsEquivalence},
      {"MHE QP matches dense and bounded brute-force oracles", QpOracles},
      {"speed recovery on constant-speed tracks", SpeedRecovery},
      {"MHE speed is smoother than naive", Smoothness},
      {"single annotation outlier", OutlierRobustness},
      {"speed compensation round trip", CompensationRoundTrip},
      {"two-sensor view displacement", ViewDisplacement},
      {"pseudo-box containment and coverage", RefinementContainment},
      {"static landmark compensation", StaticWorld},
      {"end-to-end determinism", EndToEndDeterminism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("threw: {}", e.what())};
    }
    failures += !o.pass;
    fmt::print("{} [{}] {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
    std::fflush(stdout);
  }
  fmt::print("{}/{} criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
