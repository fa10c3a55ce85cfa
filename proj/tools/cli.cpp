#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "annorefine/errors.hpp"
#include "annorefine/estimators.hpp"
#include "annorefine/io.hpp"
#include "annorefine/refine.hpp"
#include "annorefine/svg_plot.hpp"
#include "annorefine/synth.hpp"

namespace annorefine::cli {
namespace {

namespace fs = std::filesystem;
using io::EstimateRow;

const std::vector<std::string> kMethods = {"mhe", "mhe_receding", "kf", "rts", "naive"};

struct Options {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  bool no_timestamp = false;

  std::string bundle;
  std::string estimates;
  std::string refined;
  std::vector<std::string> methods{"mhe", "kf", "naive"};
  std::string method = "mhe";
  bool no_plot = false;
};

// Refine treats mismatched estimate files as a usage error rather than bad
// data.
struct UsageError : Error {
  using Error::Error;
};

void Warn(std::ostream& err, const std::string& msg) { fmt::print(err, "warning: {}\n", msg); }

io::Bundle LoadBundle(const Options& opt) {
  if (opt.bundle.empty()) throw UsageError("--bundle is required");
  return io::ReadBundle(opt.bundle);
}

std::string EstimatesPath(const Options& opt) {
  return opt.estimates.empty() ? (fs::path(opt.out) / "estimates.csv").string()
                               : opt.estimates;
}

struct TrackInput {
  int id = 0;
  AnnotatedTrack track;
  MeasurementSeries y;
};

// Tracks usable for estimation; degenerate ones are reported and skipped.
std::vector<TrackInput> LoadTracks(const io::Bundle& bundle, std::ostream& err) {
  std::vector<TrackInput> out;
  for (const auto& [id, boxes] : bundle.tracks) {
    try {
      AnnotatedTrack track = AnnotatedTrack::FromBoxes(boxes);
      const WorldTrack world = BoxesToWorld(track, bundle.poses);
      MeasurementSeries y = ProjectToPath(world.track);
      out.push_back({id, std::move(track), std::move(y)});
    } catch (const DegenerateTrackError& e) {
      Warn(err, fmt::format("track {} skipped: {}", id, e.what()));
    }
  }
  return out;
}

StateEstimate RunMethod(const std::string& method, const MeasurementSeries& y,
                        const EstimatorConfig& cfg) {
  const Prior prior = DefaultPrior(y);
  if (method == "mhe") return MheSolve(y, cfg, prior);
  if (method == "mhe_receding") return MheReceding(y, cfg, prior);
  if (method == "kf") return KfFilter(y, cfg, prior);
  if (method == "rts") return RtsSmooth(y, cfg, prior);
  StateEstimate est;
  est.times = y.times;
  const std::vector<double> s = NaiveSpeed(y);
  for (std::size_t i = 0; i < y.size(); ++i) est.states.push_back({y.d[i], s[i]});
  return est;
}

// Rows of one method and track, ordered by time.
StateEstimate EstimateFromRows(const std::vector<EstimateRow>& rows, int track_id,
                               const std::string& method) {
  std::vector<EstimateRow> picked;
  for (const EstimateRow& r : rows) {
    if (r.track_id == track_id && r.method == method) picked.push_back(r);
  }
  std::stable_sort(picked.begin(), picked.end(),
                   [](const auto& a, const auto& b) { return a.t < b.t; });
  StateEstimate est;
  for (const EstimateRow& r : picked) {
    est.times.push_back(r.t);
    est.states.push_back({r.d, r.s});
  }
  return est;
}

std::vector<std::string> MethodsInOrder(const std::vector<EstimateRow>& rows, int track_id) {
  std::vector<std::string> out;
  for (const EstimateRow& r : rows) {
    if (r.track_id == track_id && std::find(out.begin(), out.end(), r.method) == out.end()) {
      out.push_back(r.method);
    }
  }
  return out;
}

void WriteSpeedPlots(const fs::path& dir, const std::vector<EstimateRow>& rows,
                     const GroundTruth* gt) {
  std::vector<int> ids;
  for (const EstimateRow& r : rows) {
    if (std::find(ids.begin(), ids.end(), r.track_id) == ids.end()) ids.push_back(r.track_id);
  }
  for (int id : ids) {
    std::vector<PlotSeries> series;
    for (const std::string& m : MethodsInOrder(rows, id)) {
      const StateEstimate est = EstimateFromRows(rows, id, m);
      series.push_back({m, est.times, est.speeds(), "", false});
    }
    if (gt != nullptr) {
      PlotSeries truth{"truth", {}, {}, "#000000", true};
      for (const AgentFrameTruth& f : gt->AgentFrames(id)) {
        truth.x.push_back(f.t_star);
        truth.y.push_back(f.speed);
      }
      if (!truth.x.empty()) series.push_back(std::move(truth));
    }
    WriteLinePlot(dir / fmt::format("speed_track{}.svg", id),
                  fmt::format("Speed estimates, track {}", id), "time [s]", "speed [m/s]",
                  series);
  }
}

int CmdSynth(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.out.empty() || opt.out == ".") throw UsageError("synth requires --out <bundle dir>");
  ScenarioConfig cfg;
  if (!opt.config.empty()) cfg = io::ScenarioConfigFromJson(io::ReadJsonFile(opt.config));
  if (opt.seed) cfg.rng_seed = *opt.seed;
  cfg.Validate();

  const Scenario scenario = GenerateScenario(cfg);
  for (const std::string& w : scenario.warnings) Warn(err, w);
  const std::map<int, AnnotatedTrack> tracks = CorruptAnnotations(scenario.gt, cfg);
  io::WriteBundle(opt.out, scenario, tracks, !opt.no_timestamp);

  std::size_t points = 0;
  for (const auto& scan : scenario.scans) points += scan.size();
  fmt::print(out, "bundle {}: {} frames at {:g} Hz, {} sensors, {} agents, {} points, seed {}\n",
             opt.out, cfg.frame_count(), cfg.frame_rate, cfg.sensors.size(),
             cfg.agents.size(), points, cfg.rng_seed);
  for (const auto& [id, track] : tracks) {
    fmt::print(out, "  track {}: {} boxes, t = {:.9g} .. {:.9g}\n", id, track.size(),
               track.boxes().front().t_star, track.boxes().back().t_star);
  }
  return kExitOk;
}

int CmdCompensate(const Options& opt, std::ostream& out, std::ostream&) {
  const io::Bundle bundle = LoadBundle(opt);
  const std::vector<Superframe> sfs = io::BuildBundleSuperframes(bundle);
  std::vector<TimedPoint> all;
  for (const Superframe& sf : sfs) all.insert(all.end(), sf.points.begin(), sf.points.end());
  const fs::path path = fs::path(opt.out) / "superframes.csv";
  io::WritePointsCsv(path, all);
  fmt::print(out, "compensated {} frames, {} points -> {}\n", sfs.size(), all.size(),
             path.string());
  return kExitOk;
}

int CmdEstimate(const Options& opt, std::ostream& out, std::ostream& err) {
  for (const std::string& m : opt.methods) {
    if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end()) {
      throw UsageError(fmt::format("unknown method '{}' (expected one of {})", m,
                                   fmt::join(kMethods, ", ")));
    }
  }
  EstimatorConfig cfg;
  if (!opt.config.empty()) cfg = io::EstimatorConfigFromJson(io::ReadJsonFile(opt.config));
  const io::Bundle bundle = LoadBundle(opt);
  const std::vector<TrackInput> tracks = LoadTracks(bundle, err);

  struct TrackResult {
    std::vector<EstimateRow> rows;
    std::vector<std::string> warnings;
  };
  std::vector<std::future<TrackResult>> jobs;
  for (const TrackInput& in : tracks) {
    jobs.push_back(std::async(std::launch::async, [&opt, &cfg, &in] {
      TrackResult res;
      for (const std::string& m : opt.methods) {
        if (m == "mhe_receding" && cfg.horizon &&
            static_cast<std::size_t>(*cfg.horizon) > in.y.size()) {
          res.warnings.push_back(fmt::format("track {}: horizon {} exceeds {} frames, {} skipped",
                                             in.id, *cfg.horizon, in.y.size(), m));
          continue;
        }
        const StateEstimate est = RunMethod(m, in.y, cfg);
        if (!est.converged) {
          res.warnings.push_back(fmt::format("track {}: {} did not converge", in.id, m));
        }
        for (std::size_t i = 0; i < est.states.size(); ++i) {
          res.rows.push_back({est.times[i], est.states[i].d, est.states[i].s, m, in.id});
        }
      }
      return res;
    }));
  }
  std::vector<EstimateRow> rows;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    TrackResult res = jobs[k].get();
    for (const std::string& w : res.warnings) Warn(err, w);
    fmt::print(out, "track {}: {} frames, {} rows\n", tracks[k].id, tracks[k].y.size(),
               res.rows.size());
    rows.insert(rows.end(), res.rows.begin(), res.rows.end());
  }
  const fs::path path = fs::path(opt.out) / "estimates.csv";
  io::WriteEstimatesCsv(path, rows);
  if (!opt.no_plot) {
    std::optional<GroundTruth> gt;
    if (fs::exists(bundle.dir / "gt.jsonl")) gt = io::ReadGroundTruthJsonl(bundle.dir / "gt.jsonl");
    WriteSpeedPlots(opt.out, rows, gt ? &*gt : nullptr);
  }
  fmt::print(out, "wrote {} estimate rows ({}) -> {}\n", rows.size(),
             fmt::join(opt.methods, ","), path.string());
  return kExitOk;
}

int CmdRefine(const Options& opt, std::ostream& out, std::ostream& err) {
  RefineParams params;
  if (!opt.config.empty()) params = io::RefineParamsFromJson(io::ReadJsonFile(opt.config));
  const io::Bundle bundle = LoadBundle(opt);
  const std::vector<EstimateRow> rows = io::ReadEstimatesCsv(EstimatesPath(opt));
  const std::vector<Superframe> sfs = io::BuildBundleSuperframes(bundle);
  const std::vector<TrackInput> tracks = LoadTracks(bundle, err);

  std::vector<std::future<std::vector<FrameRefinement>>> jobs;
  for (const TrackInput& in : tracks) {
    const StateEstimate est = EstimateFromRows(rows, in.id, opt.method);
    if (est.states.empty()) {
      throw UsageError(fmt::format("no '{}' estimates for track {}", opt.method, in.id));
    }
    jobs.push_back(std::async(std::launch::async, [&in, &sfs, &params, est] {
      return RefineTrack(in.track, sfs, est, params);
    }));
  }
  std::vector<io::RefinedTrack> refined;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    std::vector<FrameRefinement> frames;
    try {
      frames = jobs[k].get();
    } catch (const AlignmentError& e) {
      throw UsageError(fmt::format("track {}: estimates do not match the annotations: {}",
                                   tracks[k].id, e.what()));
    }
    std::map<std::size_t, int> histogram;
    for (const FrameRefinement& f : frames) {
      ++histogram[f.pseudo_boxes.size()];
      if (f.fallback) {
        Warn(err, fmt::format("track {} t={:.9g}: no point cluster found, annotation kept",
                              tracks[k].id, f.t_star));
      }
    }
    std::vector<std::string> bins;
    for (const auto& [g, count] : histogram) bins.push_back(fmt::format("G={}:{}", g, count));
    fmt::print(out, "track {}: {} frames, {}\n", tracks[k].id, frames.size(),
               fmt::join(bins, " "));
    refined.push_back({tracks[k].id, std::move(frames)});
  }
  const fs::path path = fs::path(opt.out) / "refined.jsonl";
  io::WriteRefinedJsonl(path, refined);
  fmt::print(out, "wrote {} tracks -> {}\n", refined.size(), path.string());
  return kExitOk;
}

int CmdEval(const Options& opt, std::ostream& out, std::ostream& err) {
  if (opt.bundle.empty()) throw UsageError("--bundle is required");
  const fs::path gt_path = fs::path(opt.bundle) / "gt.jsonl";
  if (!fs::exists(gt_path)) {
    throw UsageError(fmt::format("{} not found; evaluation needs ground truth", gt_path.string()));
  }
  const io::Bundle bundle = LoadBundle(opt);
  GroundTruth gt = io::ReadGroundTruthJsonl(gt_path);
  gt.ego_traj = bundle.poses;
  const std::vector<EstimateRow> rows = io::ReadEstimatesCsv(EstimatesPath(opt));

  std::map<int, std::vector<FrameRefinement>> refined;
  std::vector<Superframe> sfs;
  if (!opt.refined.empty()) {
    for (auto& t : io::ReadRefinedJsonl(opt.refined)) refined[t.track_id] = std::move(t.frames);
    sfs = io::BuildBundleSuperframes(bundle);
  }
  const std::vector<TrackInput> tracks = LoadTracks(bundle, err);

  const fs::path metrics_path = fs::path(opt.out) / "metrics.csv";
  const fs::path frames_path = fs::path(opt.out) / "metrics_frames.csv";
  fs::create_directories(opt.out);
  std::ofstream metrics(metrics_path), frames(frames_path);
  if (!metrics || !frames) throw DataError(fmt::format("cannot write into {}", opt.out));
  metrics << "track_id,method,frames,speed_rmse,speed_tv,position_rmse,"
             "cluster_containment_min,coverage_min,coverage_mean,"
             "original_coverage_mean,center_error_median,view_count_mismatches\n";
  frames << "track_id,method,t,speed_error,position_error,cluster_containment,"
            "pseudo_coverage,original_coverage,center_error,pseudo_count,view_count\n";
  const auto num = io::FormatNumber;

  fmt::print(out, "{:>5} {:>13} {:>10} {:>10} {:>10} {:>11} {:>9}\n", "track", "method",
             "speed_rmse", "speed_tv", "pos_rmse", "containment", "coverage");
  for (const TrackInput& in : tracks) {
    const auto it = refined.find(in.id);
    const std::span<const FrameRefinement> frs =
        it == refined.end() ? std::span<const FrameRefinement>{} : it->second;
    for (const std::string& m : MethodsInOrder(rows, in.id)) {
      const StateEstimate est = EstimateFromRows(rows, in.id, m);
      const MetricsReport r = Evaluate(est, frs, gt, in.id, &in.track, sfs);
      metrics << in.id << ',' << m << ',' << r.frames.size() << ',' << num(r.speed_rmse)
              << ',' << num(r.speed_tv) << ',' << num(r.position_rmse) << ','
              << num(r.cluster_containment_min) << ',' << num(r.coverage_min) << ','
              << num(r.coverage_mean) << ',' << num(r.original_coverage_mean) << ','
              << num(r.center_error_median) << ',' << r.view_count_mismatches << '\n';
      for (const FrameMetrics& f : r.frames) {
        frames << in.id << ',' << m << ',' << num(f.t_star) << ',' << num(f.speed_error)
               << ',' << num(f.position_error) << ',' << num(f.cluster_containment) << ','
               << num(f.pseudo_coverage) << ',' << num(f.original_coverage) << ','
               << num(f.center_error) << ',' << f.pseudo_count << ',' << f.view_count
               << '\n';
      }
      fmt::print(out, "{:>5} {:>13} {:>10.4f} {:>10.3f} {:>10.4f} {:>11.4f} {:>9.4f}\n",
                 in.id, m, r.speed_rmse, r.speed_tv, r.position_rmse,
                 r.cluster_containment_min, r.coverage_min);
    }
  }
  fmt::print(out, "wrote {} and {}\n", metrics_path.string(), frames_path.string());
  return kExitOk;
}

int CmdPlot(const Options& opt, std::ostream& out, std::ostream&) {
  const std::vector<EstimateRow> rows = io::ReadEstimatesCsv(EstimatesPath(opt));
  std::optional<GroundTruth> gt;
  if (!opt.bundle.empty() && fs::exists(fs::path(opt.bundle) / "gt.jsonl")) {
    gt = io::ReadGroundTruthJsonl(fs::path(opt.bundle) / "gt.jsonl");
  }
  WriteSpeedPlots(opt.out, rows, gt ? &*gt : nullptr);
  fmt::print(out, "wrote speed plots -> {}\n", opt.out);
  return kExitOk;
}

}  // namespace

int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options opt;
  CLI::App app{"Multi-LiDAR box annotation refinement"};
  app.name("annorefine");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", opt.config, "JSON config for the chosen command");
  app.add_option("--out", opt.out, "Output directory");
  app.add_option("--seed", opt.seed, "Override the scenario seed (synth)");
  app.add_flag("--no-timestamp", opt.no_timestamp, "Omit the creation time from manifests");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scenario bundle");
  auto* compensate = app.add_subcommand("compensate", "Write motion-compensated superframes");
  auto* estimate = app.add_subcommand("estimate", "Estimate per-track speeds");
  auto* refine = app.add_subcommand("refine", "Generate pseudo boxes");
  auto* eval = app.add_subcommand("eval", "Score estimates and pseudo boxes against ground truth");
  auto* plot = app.add_subcommand("plot", "Render speed plots from an estimates file");
  for (auto* sub : {compensate, estimate, refine, eval, plot}) {
    sub->add_option("--bundle", opt.bundle, "Scenario bundle directory");
  }
  for (auto* sub : {refine, eval, plot}) {
    sub->add_option("--estimates", opt.estimates, "Estimates CSV (default <out>/estimates.csv)");
  }
  estimate->add_option("--methods", opt.methods, "Comma-separated list of methods")
      ->delimiter(',');
  estimate->add_flag("--no-plot", opt.no_plot, "Skip the SVG speed plots");
  refine->add_option("--method", opt.method, "Estimate method used for compensation");
  eval->add_option("--refined", opt.refined, "Refined JSONL to score");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return CmdSynth(opt, out, err);
    if (*compensate) return CmdCompensate(opt, out, err);
    if (*estimate) return CmdEstimate(opt, out, err);
    if (*refine) return CmdRefine(opt, out, err);
    if (*eval) return CmdEval(opt, out, err);
    if (*plot) return CmdPlot(opt, out, err);
  } catch (const UsageError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    fmt::print(err, "config error: {}\n", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    fmt::print(err, "data error: {}\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace annorefine::cli
