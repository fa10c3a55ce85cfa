#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "annorefine/errors.hpp"
#include "annorefine/track_model.hpp"
#include "generators.hpp"

using namespace annorefine;

namespace {

AnnotatedBox Box(double t, Eigen::Vector3d center, double heading,
                 BoxFrame frame = BoxFrame::kWorld, int id = 7) {
  AnnotatedBox b;
  b.t_star = t;
  b.center = center;
  b.heading = heading;
  b.frame = frame;
  b.dims = {4.5, 1.8, 1.5};
  b.track_id = id;
  return b;
}

}  // namespace

TEST_CASE("angle helpers") {
  CHECK(NormalizeAngle(M_PI) == doctest::Approx(M_PI));
  CHECK(NormalizeAngle(-M_PI) == doctest::Approx(M_PI));
  CHECK(NormalizeAngle(3 * M_PI / 2) == doctest::Approx(-M_PI / 2));
  CHECK(NormalizeAngle(7.0) == doctest::Approx(7.0 - 2 * M_PI));
  CHECK(std::abs(CircularMean(M_PI - 0.1, -M_PI + 0.1)) == doctest::Approx(M_PI));
  CHECK(CircularMean(0.2, 0.4) == doctest::Approx(0.3));
}

TEST_CASE("track construction invariants") {
  std::vector<AnnotatedBox> boxes{Box(0.0, {0, 0, 0}, 0), Box(0.1, {2, 0, 0}, 0)};
  CHECK_NOTHROW(AnnotatedTrack(boxes, 0.1));
  CHECK_THROWS_AS(AnnotatedTrack({boxes[0]}, 0.1), DegenerateTrackError);

  auto bad = boxes;
  bad[1].t_star = 0.0;
  CHECK_THROWS_AS(AnnotatedTrack(bad, 0.1), DataError);
  bad = boxes;
  bad[1].t_star = 0.115;
  CHECK_THROWS_AS(AnnotatedTrack(bad, 0.1), DataError);
  bad[1].t_star = 0.109;
  CHECK_NOTHROW(AnnotatedTrack(bad, 0.1));
  bad = boxes;
  bad[1].track_id = 8;
  CHECK_THROWS_AS(AnnotatedTrack(bad, 0.1), DataError);
  bad = boxes;
  bad[1].dims.y() = 0.0;
  CHECK_THROWS_AS(AnnotatedTrack(bad, 0.1), ConfigError);
  bad = boxes;
  bad[0].heading = 3 * M_PI / 2;
  CHECK(AnnotatedTrack(bad, 0.1).boxes()[0].heading == doctest::Approx(-M_PI / 2));
}

TEST_CASE("spacing is inferred from the median step") {
  std::vector<AnnotatedBox> boxes;
  for (int k : {3, 0, 2, 1}) boxes.push_back(Box(0.1 * k, {2.0 * k, 0, 0}, 0));
  const AnnotatedTrack t = AnnotatedTrack::FromBoxes(boxes);
  CHECK(t.delta_t() == doctest::Approx(0.1));
  CHECK(t.boxes().front().t_star == 0.0);
  CHECK(t.boxes().back().t_star == doctest::Approx(0.3));
}

TEST_CASE("identity ego trajectory leaves boxes unchanged") {
  const PoseTrajectory traj({{0.0, RigidTransform()}, {1.0, RigidTransform()}});
  const AnnotatedTrack t({Box(0.1, {3, 1, 0}, 0.4, BoxFrame::kVehicle),
                          Box(0.2, {4, 1, 0}, 0.5, BoxFrame::kVehicle)},
                         0.1);
  const WorldTrack w = BoxesToWorld(t, traj);
  CHECK_FALSE(w.already_world);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK((w.track.boxes()[i].center - t.boxes()[i].center).norm() == 0.0);
    CHECK(w.track.boxes()[i].heading == doctest::Approx(t.boxes()[i].heading));
    CHECK(w.track.boxes()[i].frame == BoxFrame::kWorld);
  }
}

TEST_CASE("ego yawed by 90 degrees rotates center and heading") {
  const RigidTransform yaw = RigidTransform::FromYaw(M_PI / 2);
  const PoseTrajectory traj({{0.0, yaw}, {1.0, yaw}});
  const AnnotatedTrack t({Box(0.1, {1, 0, 0}, 0.0, BoxFrame::kVehicle),
                          Box(0.2, {1, 0, 0}, 0.0, BoxFrame::kVehicle)},
                         0.1);
  const WorldTrack w = BoxesToWorld(t, traj);
  const AnnotatedBox& b = w.track.boxes()[0];
  CHECK((b.center - Eigen::Vector3d(0, 1, 0)).norm() <= 1e-12);
  CHECK(b.heading == doctest::Approx(M_PI / 2));
}

TEST_CASE("world lifting equals the matrix chain on a random trajectory") {
  gen::Rng rng(1);
  std::vector<PoseKnot> knots;
  for (int i = 0; i < 11; ++i) {
    knots.push_back({0.1 * i, RigidTransform::FromQuaternion(
                                  Eigen::Quaterniond(1.0, rng.Normal(0.02), rng.Normal(0.02),
                                                     rng.Normal(0.5)),
                                  rng.Vec3(30.0))});
  }
  const PoseTrajectory traj(knots);
  std::vector<AnnotatedBox> boxes;
  for (int k = 0; k < 10; ++k) {
    boxes.push_back(Box(0.05 + 0.1 * k, rng.Vec3(20.0), rng.Uniform(-3, 3), BoxFrame::kVehicle));
  }
  const AnnotatedTrack t(boxes, 0.1);
  const AnnotatedTrack w = BoxesToWorld(t, traj).track;
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const Eigen::Matrix4d m = traj.Interpolate(boxes[k].t_star).matrix();
    Eigen::Vector4d expected = m * boxes[k].center.homogeneous();
    CHECK((w.boxes()[k].center - expected.head<3>()).norm() <= 1e-9);
  }
}

TEST_CASE("world-frame input passes through with a flag") {
  const PoseTrajectory traj({{0.0, RigidTransform::FromYaw(1.0)}, {1.0, RigidTransform()}});
  const AnnotatedTrack t({Box(0.1, {1, 2, 3}, 0.3), Box(0.2, {2, 2, 3}, 0.3)}, 0.1);
  const WorldTrack w = BoxesToWorld(t, traj);
  CHECK(w.already_world);
  CHECK((w.track.boxes()[0].center - Eigen::Vector3d(1, 2, 3)).norm() == 0.0);

  const AnnotatedTrack mixed({Box(0.1, {1, 2, 3}, 0.3), Box(0.2, {2, 2, 3}, 0.3, BoxFrame::kVehicle)},
                             0.1);
  CHECK_THROWS_AS(BoxesToWorld(mixed, traj), DataError);
}

TEST_CASE("box outside the trajectory span is an error") {
  const PoseTrajectory traj({{0.0, RigidTransform()}, {1.0, RigidTransform()}});
  const AnnotatedTrack t({Box(0.95, {0, 0, 0}, 0, BoxFrame::kVehicle),
                          Box(1.05, {0, 0, 0}, 0, BoxFrame::kVehicle)},
                         0.1);
  CHECK_THROWS_AS(BoxesToWorld(t, traj), OutOfRangeError);
}

TEST_CASE("projection examples") {
  const AnnotatedTrack straight(
      {Box(0.0, {0, 0, 0}, 0), Box(0.1, {2, 0, 0}, 0), Box(0.2, {4, 0, 0}, 0)}, 0.1);
  const MeasurementSeries y = ProjectToPath(straight);
  CHECK(y.d == std::vector<double>{0.0, 2.0, 4.0});
  CHECK(y.times == std::vector<double>{0.0, 0.1, 0.2});
  CHECK(y.headings == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(y.delta_t == doctest::Approx(0.1));

  const AnnotatedTrack still({Box(0.0, {5, 5, 0}, 1), Box(0.1, {5, 5, 0}, 1),
                              Box(0.2, {5, 5, 0}, 1)},
                             0.1);
  for (double d : ProjectToPath(still).d) CHECK(d == 0.0);

  CHECK_THROWS_AS(ProjectToPath(AnnotatedTrack()), DegenerateTrackError);
  const AnnotatedTrack vehicle({Box(0.0, {0, 0, 0}, 0, BoxFrame::kVehicle),
                                Box(0.1, {1, 0, 0}, 0, BoxFrame::kVehicle)},
                               0.1);
  CHECK_THROWS_AS(ProjectToPath(vehicle), DataError);
}

TEST_CASE("projection on a quarter arc matches the projected chords") {
  const double radius = 30.0;
  const int n = 21;
  std::vector<AnnotatedBox> boxes;
  for (int k = 0; k < n; ++k) {
    const double a = (M_PI / 2) * k / (n - 1);
    boxes.push_back(Box(0.1 * k, {radius * std::sin(a), radius * (1 - std::cos(a)), 0}, a));
  }
  const MeasurementSeries y = ProjectToPath(AnnotatedTrack(boxes, 0.1));
  double d = 0.0;
  for (int k = 1; k < n; ++k) {
    const double mid = 0.5 * (boxes[k - 1].heading + boxes[k].heading);
    d += (boxes[k].center.x() - boxes[k - 1].center.x()) * std::cos(mid) +
         (boxes[k].center.y() - boxes[k - 1].center.y()) * std::sin(mid);
    CHECK(y.d[k] == doctest::Approx(d).epsilon(1e-12));
  }
  // Chords of a circle projected on the mid heading are the chord lengths.
  CHECK(y.d.back() == doctest::Approx((n - 1) * 2 * radius * std::sin(M_PI / 4 / (n - 1))));
}

TEST_CASE("projection handles headings across the wrap") {
  std::vector<AnnotatedBox> boxes;
  const double h[] = {M_PI - 0.01, -M_PI + 0.01, M_PI - 0.005};
  for (int k = 0; k < 3; ++k) boxes.push_back(Box(0.1 * k, {-2.0 * k, 0, 0}, h[k]));
  const MeasurementSeries y = ProjectToPath(AnnotatedTrack(boxes, 0.1));
  CHECK(y.d[1] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(y.d[2] == doctest::Approx(4.0).epsilon(1e-3));
}

TEST_CASE("projection is translation invariant") {
  gen::Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AnnotatedBox> a, b;
    const Eigen::Vector3d offset = rng.Vec3(1000.0);
    for (int k = 0; k < 15; ++k) {
      const Eigen::Vector3d c = rng.Vec3(50.0);
      const double h = rng.Uniform(-M_PI, M_PI);
      a.push_back(Box(0.1 * k, c, h));
      b.push_back(Box(0.1 * k, c + offset, h));
    }
    const auto ya = ProjectToPath(AnnotatedTrack(a, 0.1)), yb = ProjectToPath(AnnotatedTrack(b, 0.1));
    for (std::size_t k = 0; k < ya.d.size(); ++k) CHECK(std::abs(ya.d[k] - yb.d[k]) <= 1e-9);
  }
}

TEST_CASE("projection recovers distances generated by the kinematic model") {
  gen::Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const double heading = rng.Uniform(-M_PI, M_PI);
    const Eigen::Vector3d origin = rng.Vec3(100.0);
    KinematicState x{0.0, rng.Uniform(0, 30)};
    const double u = rng.Uniform(-2, 2);
    std::vector<AnnotatedBox> boxes;
    std::vector<double> truth;
    for (int k = 0; k < 40; ++k) {
      boxes.push_back(Box(0.1 * k, origin + x.d * HeadingDirection(heading), heading));
      truth.push_back(x.d);
      x = Transition(x, u, 0.1);
    }
    const MeasurementSeries y = ProjectToPath(AnnotatedTrack(boxes, 0.1));
    for (std::size_t k = 0; k < truth.size(); ++k) CHECK(std::abs(y.d[k] - truth[k]) <= 1e-9);
  }
}

TEST_CASE("transition examples") {
  KinematicState x = Transition({0.0, 20.0}, 0.0, 0.1);
  CHECK(x.d == doctest::Approx(2.0));
  CHECK(x.s == 20.0);
  x = Transition({0.0, 0.0}, 0.0, 0.1);
  CHECK(x.d == 0.0);
  CHECK(x.s == 0.0);
  x = Transition({0.0, 10.0}, 2.0, 0.5);
  CHECK(x.d == doctest::Approx(5.25));
  CHECK(x.s == doctest::Approx(11.0));
  CHECK_THROWS_AS(Transition({0.0, 1.0}, 0.0, 0.0), DataError);
}

TEST_CASE("transition steps compose without acceleration") {
  gen::Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    KinematicState x{rng.Uniform(-10, 10), rng.Uniform(-30, 30)};
    const int n = rng.Int(1, 50);
    const double dt = rng.Uniform(0.01, 0.2);
    const KinematicState once = Transition(x, 0.0, n * dt);
    for (int k = 0; k < n; ++k) x = Transition(x, 0.0, dt);
    CHECK(x.d == doctest::Approx(once.d).epsilon(1e-12));
    CHECK(x.s == once.s);
  }
}

TEST_CASE("measurement returns the distance") {
  CHECK(Measure({5.0, 20.0}) == 5.0);
  CHECK(Measure({0.0, 0.0}) == 0.0);
  CHECK(Measure({-3.2, 7.0}) == -3.2);
}

TEST_CASE("measurement series validation") {
  MeasurementSeries y = gen::SeriesFrom({0, 1, 2}, 0.1);
  CHECK_NOTHROW(y.Validate());
  y.headings.pop_back();
  CHECK_THROWS_AS(y.Validate(), DataError);
  y = gen::SeriesFrom({0, 1, 2}, 0.1);
  y.times[2] = 0.05;
  CHECK_THROWS_AS(y.Validate(), DataError);
}
