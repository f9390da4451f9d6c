#include <doctest.h>

#include "support/artifacts.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pressfit;
using namespace pressfit::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_kind(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.kind();
  }
  return "none";
}

ExperimentSpec small_spec(const fs::path &out) {
  ExperimentSpec s;
  s.name = "small";
  s.presets = {"training", "goal_4"};
  s.trials_per_cell = 3;
  s.master_seed = 42;
  s.output_dir = out.string();
  return s;
}

} // namespace

TEST_CASE("demo trajectory") {
  const auto traj = demo_trajectory();
  REQUIRE(traj.size() == 21);
  CHECK(traj.front().pose.position == DemoProfile{}.start);
  for (std::size_t i = 1; i < traj.size(); ++i) {
    CHECK(traj[i].time > traj[i - 1].time);
    CHECK(traj[i].pose.position.x() > traj[i - 1].pose.position.x());
    CHECK(traj[i].pose.position.y() == DemoProfile{}.start.y());
  }
  DemoProfile bad;
  bad.intervals = 0;
  CHECK(error_kind([&] { demo_trajectory(bad); }) == "InvalidConfig");
}

TEST_CASE("teacher scripts") {
  const TeacherScript fixture = load_teacher_script(testing::fixture("teacher_script.json"));
  CHECK(fixture.ticks == 120);
  REQUIRE(fixture.entries.size() == 1);
  CHECK(json(fixture).get<TeacherScript>() == fixture);

  const ScriptedTeacher teacher(fixture);
  CHECK_FALSE(teacher.feedback_at(0).has_value());
  const auto fb = teacher.feedback_at(fixture.entries[0].tick);
  REQUIRE(fb);
  CHECK(fb->offsets == fixture.entries[0].offsets);
  CHECK(fb->source == FeedbackSource::human);
  CHECK(error_kind([&] { teacher.feedback_at(fixture.ticks); }) == "ScriptExhausted");
  CHECK(error_kind([&] { teacher.feedback_at(-1); }) == "ScriptExhausted");

  json bad = fixture;
  bad["entries"][0]["offsets"] = {1.5, 0.0, 0.0};
  CHECK(error_kind([&] { bad.get<TeacherScript>(); }) == "MalformedFile");
  bad = fixture;
  bad["entries"][0]["tick"] = 500;
  CHECK(error_kind([&] { bad.get<TeacherScript>(); }) == "MalformedFile");
  bad = fixture;
  bad["version"] = 2;
  CHECK(error_kind([&] { bad.get<TeacherScript>(); }) == "MalformedFile");
  bad = fixture;
  bad.erase("ticks");
  CHECK(error_kind([&] { bad.get<TeacherScript>(); }) == "MalformedFile");
}

TEST_CASE("an empty script leaves the demonstration policy untouched") {
  TrainingSpec spec;
  const policy::Policy demo_only = policy::train(policy::record_demonstration(demo_trajectory(), spec.policy), spec.policy);
  const policy::Policy trained = train_policy(spec);
  CHECK(policy::policy_to_json(trained) == policy::policy_to_json(demo_only));
  CHECK(policy::policy_to_json(scripted_teacher(demo_only, TeacherScript{})) == policy::policy_to_json(demo_only));

  TeacherScript silent;
  silent.ticks = 30;
  const policy::Policy rolled = scripted_teacher(demo_only, silent);
  CHECK(policy::policy_to_json(rolled) == policy::policy_to_json(demo_only));
}

TEST_CASE("the fixture correction changes the policy near the seat") {
  const policy::Policy &trained = testing::shared_artifacts().policy;
  TrainingSpec spec;
  const policy::Policy demo_only = train_policy(spec);
  const Vec3 seat = sim::spawn_scenario("training").goal.position;
  CHECK(policy::query(trained, seat).dx.x() > policy::query(demo_only, seat).dx.x() + 1e-3);
}

TEST_CASE("artifacts") {
  const fs::path dir = fs::temp_directory_path() / "pressfit_test_artifacts";
  fs::remove_all(dir);
  CHECK(error_kind([&] { load_artifacts(dir.string()); }) == "MissingArtifacts");
  CHECK(error_kind([&] { load_artifacts(""); }) == "MissingArtifacts");
  const Artifacts &art = testing::shared_artifacts();
  save_artifacts(dir.string(), art);
  const Artifacts back = load_artifacts(dir.string());
  CHECK(policy::policy_to_json(back.policy) == policy::policy_to_json(art.policy));
  CHECK(back.classifier.theta() == art.classifier.theta());

  ExperimentSpec spec;
  spec.presets = {"training"};
  spec.artifacts_dir = (dir / "missing").string();
  CHECK(error_kind([&] { run_experiment(spec); }) == "MissingArtifacts");
  fs::remove_all(dir);
}

TEST_CASE("experiment spec validation and json") {
  ExperimentSpec s;
  CHECK(error_kind([&] { s.validate(); }) == "InvalidConfig");
  s.presets = {"nowhere"};
  CHECK(error_kind([&] { s.validate(); }) == "InvalidConfig");
  s.presets = {"goal_1", "grasp_2"};
  s.trials_per_cell = 0;
  CHECK(error_kind([&] { s.validate(); }) == "InvalidConfig");
  s.trials_per_cell = 7;
  s.master_seed = 99;
  s.noise_max = 0.1;
  s.modes = {runtime::Mode::accifr};
  const ExperimentSpec back = json(s).get<ExperimentSpec>();
  CHECK(json(back) == json(s));
  CHECK(battery_presets("start").size() == 5);
  CHECK(battery_presets("grasp").front() == "grasp_1");
  CHECK(error_kind([] { battery_presets("everything"); }) == "InvalidConfig");
}

TEST_CASE("trial seeds depend on preset and index, not mode") {
  CHECK(trial_seed(1, "goal_1", 0) == trial_seed(1, "goal_1", 0));
  CHECK(trial_seed(1, "goal_1", 0) != trial_seed(1, "goal_1", 1));
  CHECK(trial_seed(1, "goal_1", 0) != trial_seed(1, "goal_2", 0));
  CHECK(trial_seed(1, "goal_1", 0) != trial_seed(2, "goal_1", 0));
}

TEST_CASE("experiments are reproducible and their records rebuild the report") {
  const fs::path a = fs::temp_directory_path() / "pressfit_test_exp_a";
  const fs::path b = fs::temp_directory_path() / "pressfit_test_exp_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const Artifacts &art = testing::shared_artifacts();

  ExperimentSpec sa = small_spec(a);
  sa.workers = 1;
  ExperimentSpec sb = small_spec(b);
  sb.workers = 3;
  const ExperimentReport ra = run_experiment(sa, art);
  const ExperimentReport rb = run_experiment(sb, art);
  CHECK(ra.violations.empty());
  CHECK(ra.cells == rb.cells);
  CHECK(slurp(a / "report.csv") == slurp(b / "report.csv"));
  CHECK(slurp(a / "report.txt") == slurp(b / "report.txt"));
  CHECK(slurp(a / "records/accifr/goal_4/trial_02.json") == slurp(b / "records/accifr/goal_4/trial_02.json"));
  CHECK(slurp(a / "records/ilosa/training/trial_00_wrench.csv") ==
        slurp(b / "records/ilosa/training/trial_00_wrench.csv"));

  REQUIRE(ra.cells.size() == 4);
  const CellResult *nominal = ra.cell(runtime::Mode::accifr, "training");
  REQUIRE(nominal);
  CHECK(nominal->successes == 3);
  CHECK(nominal->collisions == 0);
  CHECK(ra.cell(runtime::Mode::accifr, "goal_4")->successes >= ra.cell(runtime::Mode::ilosa, "goal_4")->successes);
  CHECK(ra.cell(runtime::Mode::ilosa, "goal_4")->collisions == 0);

  const ExperimentReport rebuilt = report_from_records(a.string());
  CHECK(rebuilt.cells == ra.cells);
  CHECK(report_csv(rebuilt) == slurp(a / "report.csv"));
  CHECK(report_csv(ra).rfind("mode,preset,trials,success,collisions\n", 0) == 0);

  ExperimentSpec sc = small_spec(b);
  sc.master_seed = 43;
  sc.save_records = false;
  sc.output_dir.clear();
  const ExperimentReport rc = run_experiment(sc, art);
  CHECK(rc.cells.size() == 4);

  fs::remove(a / "records/ilosa/goal_4/trial_01.json");
  CHECK(error_kind([&] { report_from_records(a.string()); }) == "MissingArtifacts");
  fs::remove_all(a);
  fs::remove_all(b);
}
