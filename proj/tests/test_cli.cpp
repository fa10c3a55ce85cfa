#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

#include "annorefine/io.hpp"
#include "cli.hpp"
#include "tempdir.hpp"

using namespace annorefine;
using testing_fs::ReadText;
using testing_fs::TempDir;
using testing_fs::WriteText;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "annorefine");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::Run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// A short scenario written as a config file.
std::string ShortScene(const TempDir& dir, const std::string& extra = "") {
  const auto path = dir / "scene.json";
  WriteText(path, R"({"duration": 1.0, "annotation_noise_sigma": 0.03)" + extra + "}");
  return path.string();
}

std::string Synth(const TempDir& dir, const std::string& extra = "") {
  const std::string bundle = (dir / "bundle").string();
  const Result r = Cli({"--config", ShortScene(dir, extra), "--out", bundle, "--no-timestamp",
                        "synth"});
  REQUIRE(r.code == cli::kExitOk);
  return bundle;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  TempDir dir;
  CHECK(Cli({}).code == cli::kExitUsage);
  CHECK(Cli({"frobnicate"}).code == cli::kExitUsage);
  CHECK(Cli({"synth"}).code == cli::kExitUsage);
  CHECK(Cli({"estimate"}).code == cli::kExitUsage);
  CHECK(Cli({"estimate", "--bundle", (dir / "missing").string()}).code == cli::kExitUsage);

  WriteText(dir / "zero.json", R"({"duration": 0})");
  const Result zero = Cli({"--config", (dir / "zero.json").string(), "--out",
                           (dir / "b").string(), "synth"});
  CHECK(zero.code == cli::kExitUsage);
  CHECK(zero.err.find("duration") != std::string::npos);
}

TEST_CASE("synth, estimate, refine and eval run end to end") {
  TempDir dir;
  const std::string bundle = Synth(dir);
  const std::string out = (dir / "out").string();

  Result r = Cli({"--out", out, "estimate", "--bundle", bundle});
  REQUIRE(r.code == cli::kExitOk);
  const auto rows = io::ReadEstimatesCsv(dir / "out/estimates.csv");
  CHECK(rows.size() == 30);
  int mhe = 0, kf = 0, naive = 0;
  for (const auto& row : rows) {
    mhe += row.method == "mhe";
    kf += row.method == "kf";
    naive += row.method == "naive";
  }
  CHECK(mhe == 10);
  CHECK(kf == 10);
  CHECK(naive == 10);
  CHECK(std::filesystem::exists(dir / "out/speed_track0.svg"));

  r = Cli({"--out", out, "--config", CONFIG_DIR "/refine.json", "refine", "--bundle", bundle});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out.find("track 0: 10 frames") != std::string::npos);
  const auto refined = io::ReadRefinedJsonl(dir / "out/refined.jsonl");
  REQUIRE(refined.size() == 1);
  CHECK(refined[0].frames.size() == 10);

  r = Cli({"--out", out, "eval", "--bundle", bundle, "--refined",
           (dir / "out/refined.jsonl").string()});
  REQUIRE(r.code == cli::kExitOk);
  const std::string metrics = ReadText(dir / "out/metrics.csv");
  CHECK(metrics.rfind("track_id,method,frames,speed_rmse", 0) == 0);
  CHECK(std::filesystem::exists(dir / "out/metrics_frames.csv"));

  r = Cli({"--out", (dir / "plots").string(), "plot", "--bundle", bundle, "--estimates",
           (dir / "out/estimates.csv").string()});
  CHECK(r.code == cli::kExitOk);
  CHECK(std::filesystem::exists(dir / "plots/speed_track0.svg"));

  r = Cli({"--out", out, "compensate", "--bundle", bundle});
  CHECK(r.code == cli::kExitOk);
  CHECK(io::ReadPointsCsv(dir / "out/superframes.csv").size() ==
        io::ReadPointsCsv(std::filesystem::path(bundle) / "points.csv").size());
}

TEST_CASE("method selection controls the rows") {
  TempDir dir;
  const std::string bundle = Synth(dir);
  const std::string out = (dir / "out").string();
  Result r = Cli({"--out", out, "estimate", "--bundle", bundle, "--methods", "mhe,rts", "--no-plot"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(io::ReadEstimatesCsv(dir / "out/estimates.csv").size() == 20);
  CHECK_FALSE(std::filesystem::exists(dir / "out/speed_track0.svg"));

  r = Cli({"--out", out, "estimate", "--bundle", bundle, "--methods", "mhe,magic"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("magic") != std::string::npos);
}

TEST_CASE("a full default run gives one row per frame and method") {
  TempDir dir;
  const std::string bundle = (dir / "bundle").string();
  REQUIRE(Cli({"--out", bundle, "--no-timestamp", "synth"}).code == cli::kExitOk);
  const Result r = Cli({"--out", (dir / "out").string(), "estimate", "--bundle", bundle,
                        "--methods", "mhe,kf,naive", "--no-plot"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(io::ReadEstimatesCsv(dir / "out/estimates.csv").size() == 300);
}

TEST_CASE("two frame track") {
  TempDir dir;
  const std::string bundle = (dir / "bundle").string();
  WriteText(dir / "short.json", R"({"duration": 0.2})");
  REQUIRE(Cli({"--config", (dir / "short.json").string(), "--out", bundle, "synth"}).code ==
          cli::kExitOk);
  const Result r = Cli({"--out", (dir / "out").string(), "estimate", "--bundle", bundle,
                        "--methods", "naive", "--no-plot"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(io::ReadEstimatesCsv(dir / "out/estimates.csv").size() == 2);
}

TEST_CASE("same seed writes identical bundles") {
  TempDir a, b;
  const std::string ba = Synth(a), bb = Synth(b);
  for (const char* f : {"points.csv", "poses.csv", "tracks.jsonl", "gt.jsonl", "manifest.json",
                        "calib.json"}) {
    CHECK(ReadText(std::filesystem::path(ba) / f) == ReadText(std::filesystem::path(bb) / f));
  }
  const std::string other = (b / "other").string();
  REQUIRE(Cli({"--config", ShortScene(b), "--out", other, "--seed", "5", "--no-timestamp",
               "synth"}).code == cli::kExitOk);
  CHECK(ReadText(std::filesystem::path(ba) / "points.csv") !=
        ReadText(std::filesystem::path(other) / "points.csv"));
}

TEST_CASE("eval without ground truth exits with 2") {
  TempDir dir;
  const std::string bundle = Synth(dir);
  REQUIRE(Cli({"--out", bundle, "estimate", "--bundle", bundle, "--no-plot"}).code == cli::kExitOk);
  std::filesystem::remove(std::filesystem::path(bundle) / "gt.jsonl");
  const Result r = Cli({"--out", bundle, "eval", "--bundle", bundle});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("gt.jsonl") != std::string::npos);
}

TEST_CASE("refine with misaligned estimates exits with 2") {
  TempDir dir;
  const std::string bundle = Synth(dir);
  std::vector<io::EstimateRow> rows;
  for (int k = 0; k < 10; ++k) rows.push_back({0.05 + 0.1 * k + 0.5, 0.0, 25.0, "mhe", 0});
  io::WriteEstimatesCsv(dir / "shifted.csv", rows);
  const Result r = Cli({"--out", (dir / "out").string(), "refine", "--bundle", bundle,
                        "--estimates", (dir / "shifted.csv").string()});
  CHECK(r.code == cli::kExitUsage);
}

TEST_CASE("malformed data exits with 3") {
  TempDir dir;
  const std::string bundle = Synth(dir);
  WriteText(std::filesystem::path(bundle) / "points.csv", "x,y\n1,2\n");
  const Result r = Cli({"--out", (dir / "out").string(), "compensate", "--bundle", bundle});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("points.csv") != std::string::npos);
}

TEST_CASE("a stationary object keeps its annotations") {
  TempDir dir;
  const std::string bundle = Synth(
      dir, R"(, "annotation_noise_sigma": 0, "view_bias": false,
           "agents": [{"init_pos": [30, 0, 1.1], "speed_profile": 0}])");
  const std::string out = (dir / "out").string();
  REQUIRE(Cli({"--out", out, "estimate", "--bundle", bundle, "--no-plot"}).code == cli::kExitOk);
  const Result r = Cli({"--out", out, "refine", "--bundle", bundle});
  REQUIRE(r.code == cli::kExitOk);
  const auto input = io::ReadTracksJsonl(std::filesystem::path(bundle) / "tracks.jsonl").at(0);
  const auto refined = io::ReadRefinedJsonl(dir / "out/refined.jsonl");
  REQUIRE(refined.size() == 1);
  REQUIRE(refined[0].frames.size() == input.size());
  for (std::size_t k = 0; k < input.size(); ++k) {
    REQUIRE(refined[0].frames[k].pseudo_boxes.size() == 1);
    const auto& pb = refined[0].frames[k].pseudo_boxes[0];
    CHECK(pb.source_cluster == -1);
    CHECK(pb.box.center == input[k].center);
  }
}

TEST_CASE("refine warns about frames without points") {
  TempDir dir;
  const std::string bundle = Synth(dir);
  const std::string out = (dir / "out").string();
  REQUIRE(Cli({"--out", out, "estimate", "--bundle", bundle, "--no-plot"}).code == cli::kExitOk);
  const auto points_path = std::filesystem::path(bundle) / "points.csv";
  auto points = io::ReadPointsCsv(points_path);
  std::erase_if(points, [](const TimedPoint& p) { return p.frame_id == 4; });
  io::WritePointsCsv(points_path, points);
  const Result r = Cli({"--out", out, "refine", "--bundle", bundle});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.err.find("t=0.45") != std::string::npos);
  const auto refined = io::ReadRefinedJsonl(dir / "out/refined.jsonl");
  CHECK(refined[0].frames[4].fallback);
}
