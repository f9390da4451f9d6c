#include <doctest.h>

#include "pressfit/core/serialization.hpp"
#include "pressfit/core/types.hpp"

#include <random>
#include <sstream>

using namespace pressfit;

namespace {

Vec3 random_vec(std::mt19937_64 &rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return {n(rng), n(rng), n(rng)};
}

Pose random_pose(std::mt19937_64 &rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Pose(random_vec(rng), Quaternion{n(rng), n(rng), n(rng), n(rng)});
}

} // namespace

TEST_CASE("pose_distance examples") {
  const Pose a(Vec3(0.0, 0.0, 0.0));
  CHECK(pose_distance(a, a) == 0.0);
  CHECK(pose_distance(a, Pose(Vec3(3.0, 4.0, 0.0))) == doctest::Approx(5.0).epsilon(1e-15));
  const Pose goal(Vec3(0.80, -0.05, 0.43), Quaternion{0.58, -0.50, 0.48, -0.40});
  const Pose start(Vec3(0.74, -0.05, 0.43), Quaternion{0.58, -0.50, 0.48, -0.40});
  CHECK(pose_distance(goal, start) == doctest::Approx(0.06).epsilon(1e-12));
}

TEST_CASE("pose_distance ignores orientation") {
  const Pose a(Vec3(1.0, 2.0, 3.0), Quaternion{1, 0, 0, 0});
  const Pose b(Vec3(1.0, 2.0, 3.0), Quaternion{0, 1, 0, 0});
  CHECK(pose_distance(a, b) == 0.0);
}

TEST_CASE("pose_distance is a metric on positions") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    CHECK(pose_distance(a, b) == pose_distance(b, a));
    CHECK(pose_distance(a, a) == 0.0);
    CHECK(pose_distance(a, c) <= pose_distance(a, b) + pose_distance(b, c) + 1e-12);
  }
}

TEST_CASE("quaternions are normalized on construction") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Pose p = random_pose(rng);
    CHECK(std::abs(p.orientation.norm() - 1.0) < 1e-9);
  }
  CHECK_THROWS_AS(Quaternion({0, 0, 0, 0}).normalized(), Error);
}

TEST_CASE("mirror_y") {
  CHECK(mirror_y(Wrench{}) == Wrench{});
  const Wrench w{Vec3(1, 2, 3), Vec3(4, 5, 6)};
  const Wrench m = mirror_y(w);
  CHECK(m.force == Vec3(1, -2, 3));
  CHECK(m.torque == Vec3(-4, 5, -6));

  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Wrench r{random_vec(rng, 10.0), random_vec(rng, 0.5)};
    CHECK(mirror_y(mirror_y(r)) == r);
  }
}

TEST_CASE("feedback offsets are capped") {
  const Feedback f = Feedback::capped(Vec3(2.0, -3.0, 0.5), FeedbackSource::human, 1.0);
  CHECK(f.offsets == Vec3(1.0, -1.0, 0.5));
}

TEST_CASE("demonstration validation") {
  Demonstration d;
  CHECK_THROWS_AS(d.validate(), Error);
  d.samples.push_back({});
  d.dt = 0.0;
  CHECK_THROWS_AS(d.validate(), Error);
  d.dt = 0.1;
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("JSON round trip is bit exact for every type") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Pose p = random_pose(rng);
    CHECK(json(p).get<Pose>() == p);
    CHECK(json::parse(json(p).dump()).get<Pose>() == p);

    const Wrench w{random_vec(rng, 3.0), random_vec(rng, 0.1)};
    CHECK(json::parse(json(w).dump()).get<Wrench>() == w);

    Demonstration d;
    d.dt = 0.1 + trial * 1e-3;
    for (int i = 0; i < 4; ++i) d.samples.push_back({random_vec(rng), random_vec(rng, 1e-3), random_vec(rng, 100)});
    CHECK(json::parse(json(d).dump()).get<Demonstration>() == d);

    const Feedback f{random_vec(rng, 0.3), trial % 2 ? FeedbackSource::human : FeedbackSource::recovery};
    CHECK(json::parse(json(f).dump()).get<Feedback>() == f);

    RunRecord r;
    r.success = trial % 3 == 0;
    r.ticks = trial;
    for (int i = 0; i < 3; ++i) {
      r.trajectory.push_back({0.1 * i + 1e-17 * trial, random_pose(rng)});
      r.wrench_log.push_back({0.1 * i, Wrench{random_vec(rng), random_vec(rng)}});
    }
    r.collisions.push_back({0.05, ContactSide::right, true});
    CHECK(json::parse(json(r).dump()).get<RunRecord>() == r);
  }
}

TEST_CASE("wrench CSV round trip and header") {
  std::mt19937_64 rng(9);
  std::vector<TimedWrench> log;
  for (int i = 0; i < 20; ++i) log.push_back({i / 29.0, Wrench{random_vec(rng), random_vec(rng, 1e-2)}});
  std::stringstream ss;
  write_wrench_csv(ss, log);
  CHECK(ss.str().rfind("t,fx,fy,fz,tx,ty,tz\n", 0) == 0);
  CHECK(read_wrench_csv(ss) == log);

  std::stringstream bad("a,b\n1,2\n");
  CHECK_THROWS_AS(read_wrench_csv(bad), Error);
}

TEST_CASE("trajectory CSV round trip") {
  std::vector<TimedPose> traj{{0.0, Pose(Vec3(0.1, 0.2, 0.3))}, {0.1, Pose(Vec3(1.0 / 3.0, 0.2, 0.3))}};
  std::stringstream ss;
  write_trajectory_csv(ss, traj);
  CHECK(read_trajectory_csv(ss) == traj);
}
