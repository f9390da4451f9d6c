#pragma once

#include "pressfit/classifier/dataset.hpp"
#include "pressfit/policy/policy.hpp"
#include "pressfit/runtime/runtime.hpp"

#include <optional>
#include <string>
#include <vector>

namespace pressfit::harness {

/// Synthetic kinesthetic demonstration: an exponential approach
/// x_i = goal - (goal - start) * exp(-i * dt / time_constant), i = 0..intervals.
struct DemoProfile {
  Vec3 start = Vec3(0.74, -0.05, 0.43);
  Vec3 goal = Vec3(0.80, -0.05, 0.43);
  int intervals = 20;
  double dt = 0.1;
  double time_constant = 0.6;
};
std::vector<TimedPose> demo_trajectory(const DemoProfile &profile = {});

struct ScriptEntry {
  long tick = 0;
  Vec3 offsets = Vec3::Zero();
  bool operator==(const ScriptEntry &) const = default;
};

/// Teacher corrections keyed by rollout tick. The rollout lasts `ticks` ticks.
struct TeacherScript {
  int version = 1;
  std::string preset = "training";
  long ticks = 0;
  std::vector<ScriptEntry> entries;

  /// Throws Error{"MalformedFile"}: unknown version, unsorted or
  /// out-of-range ticks, offsets outside [-1, 1].
  void validate() const;
  bool operator==(const TeacherScript &) const = default;
};

void to_json(json &j, const TeacherScript &s);
void from_json(const json &j, TeacherScript &s);
TeacherScript load_teacher_script(const std::string &path);

/// Replays a script tick by tick.
class ScriptedTeacher {
public:
  explicit ScriptedTeacher(TeacherScript script);
  /// Feedback for `tick` (nullopt when the script is silent there).
  /// Throws Error{"ScriptExhausted"} for ticks at or past script.ticks.
  std::optional<Feedback> feedback_at(long tick) const;
  const TeacherScript &script() const { return script_; }

private:
  TeacherScript script_;
};

/// Runs the correction rollout of `script` on its preset (ILoSA loop, no
/// sensor noise, no early stop) and returns the corrected policy.
policy::Policy scripted_teacher(const policy::Policy &policy, const TeacherScript &script,
                                const runtime::MonitorConfig &monitor = {});

struct TrainingSpec {
  DemoProfile demo;
  policy::PolicyConfig policy;
  TeacherScript script;
};

/// Demonstration, GP fit, then the scripted correction rollout.
policy::Policy train_policy(const TrainingSpec &spec);

struct ClassifierTrainingSpec {
  std::string preset = "training";
  classifier::DatasetConfig dataset;
  classifier::ClassifierConfig model;
  double window_seconds = 0.5;
};
classifier::TrainResult train_contact_classifier(const ClassifierTrainingSpec &spec);

struct Artifacts {
  policy::Policy policy;
  classifier::ClassifierModel classifier;
};

/// <dir>/policy.json and <dir>/classifier.json.
void save_artifacts(const std::string &dir, const Artifacts &artifacts);
/// Throws Error{"MissingArtifacts"} when either file is absent.
Artifacts load_artifacts(const std::string &dir);

runtime::ContactPredictor make_predictor(const classifier::ClassifierModel &model);

struct ExperimentSpec {
  std::string name = "experiment";
  std::vector<runtime::Mode> modes{runtime::Mode::ilosa, runtime::Mode::accifr};
  std::vector<std::string> presets;
  int trials_per_cell = 20;
  std::uint64_t master_seed = 0;
  std::string output_dir;         // empty: nothing is written
  std::string artifacts_dir;      // used when no artifacts are passed in
  runtime::MonitorConfig monitor;
  double start_jitter = 0.001;    // m, uniform per planar axis
  double noise_min = 0.02;        // N, per-trial sensor noise std range
  double noise_max = 0.06;
  bool save_records = true;
  int workers = 0;                // 0: hardware concurrency

  /// Throws Error{"InvalidConfig"}.
  void validate() const;
};

void to_json(json &j, const ExperimentSpec &s);
void from_json(const json &j, ExperimentSpec &s);

struct CellResult {
  runtime::Mode mode = runtime::Mode::ilosa;
  std::string preset;
  int trials = 0;
  int successes = 0;
  long collisions = 0;
  bool operator==(const CellResult &) const = default;
};

struct ExperimentReport {
  std::string name;
  std::uint64_t master_seed = 0;
  int trials_per_cell = 0;
  std::vector<CellResult> cells;
  /// Broken runtime invariants, one line each (empty when all hold).
  std::vector<std::string> violations;

  const CellResult *cell(runtime::Mode mode, const std::string &preset) const;
};

/// Seed of trial k of a preset; identical across modes so cells compare the
/// same perturbations.
std::uint64_t trial_seed(std::uint64_t master_seed, const std::string &preset, int trial);

/// Runs every (mode, preset, trial). Writes report.csv, report.txt and
/// records/<mode>/<preset>/trial_NN.{json,_wrench.csv} under output_dir.
ExperimentReport run_experiment(const ExperimentSpec &spec, const Artifacts &artifacts);
/// Loads artifacts from spec.artifacts_dir. Throws Error{"MissingArtifacts"}.
ExperimentReport run_experiment(const ExperimentSpec &spec);

/// Columns: mode,preset,trials,success,collisions.
std::string report_csv(const ExperimentReport &report);
std::string report_table(const ExperimentReport &report, const runtime::MonitorConfig &monitor = {});

/// Rebuilds the cells from the persisted records under output_dir.
ExperimentReport report_from_records(const std::string &output_dir);

/// Named batteries: "start", "goal", "grasp".
std::vector<std::string> battery_presets(const std::string &battery);

} // namespace pressfit::harness
