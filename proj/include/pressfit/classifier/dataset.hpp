#pragma once

#include "pressfit/classifier/model.hpp"
#include "pressfit/sim/world.hpp"

#include <functional>
#include <optional>
#include <string>

namespace pressfit::classifier {

struct DatasetConfig {
  int trials = 80;
  std::uint64_t seed = 0;
  double offset_min = 0.003;      // m, lateral aim error magnitude
  double offset_max = 0.008;
  double lead_min = 0.004;        // m, attractor lead toward the seat
  double lead_max = 0.006;
  double noise_min = 0.02;        // N, force noise std
  double noise_max = 0.08;
  double start_jitter = 0.005;    // m, along x
  double onset_force = 1.0;       // N, |f| that marks the collision
  double window_seconds = 10.0;   // recorded history after onset
  long max_approach_ticks = 300;
  int substeps = 30;
  double stiffness = 600.0;

  /// Throws Error{"InvalidConfig"}.
  void validate() const;
};

/// One scripted collision: aim at seat + (0, lateral_offset) and push with a
/// constant attractor lead. Positive offsets hit the +y neighbor.
struct TrialPlan {
  double lateral_offset = 0.0;
  double lead = 0.0;
  double noise_std = 0.0;
  double start_dx = 0.0;
  std::uint64_t noise_seed = 0;
};

/// Alternating sides, magnitudes and noise drawn from the seed.
std::vector<TrialPlan> plan_trials(const DatasetConfig &config);

/// Mirrors a plan (lateral offset negated).
TrialPlan mirror_plan(const TrialPlan &plan);

/// Label implied by the aim: +y error collides on the carton's right side.
ContactSide expected_side(const TrialPlan &plan);

struct TrialWindow {
  WrenchWindow window;   // 6 x round(window_seconds * 29), starting at onset
  ContactSide label = ContactSide::left;
  TrialPlan plan;
};

/// Runs one plan against the scenario's world and seat. Returns nullopt
/// when no collision occurs within max_approach_ticks.
std::optional<TrialWindow> run_trial(const sim::Scenario &scenario, const TrialPlan &plan,
                                     const DatasetConfig &config);

struct GeneratedDataset {
  LabeledDataset data;
  std::vector<TrialPlan> plans;  // kept trials, parallel to data.windows
  int discarded = 0;
};

/// Scripted collision rollouts labeled by the planned side. Trials without a
/// collision are discarded and reported through `warn`.
GeneratedDataset generate_dataset(const sim::Scenario &scenario, const DatasetConfig &config,
                                  const std::function<void(const std::string &)> &warn = {});

/// Dataset directory: manifest.json plus window_NNN.csv (columns
/// fx,fy,fz,tx,ty,tz). Throws Error{"IoError"}, Error{"MalformedFile"}.
void save_dataset(const std::string &dir, const GeneratedDataset &dataset, const DatasetConfig &config);
GeneratedDataset load_dataset(const std::string &dir);

/// Windows plus their mirror images with flipped labels.
LabeledDataset augment_with_mirror(const LabeledDataset &data);

void to_json(json &j, const DatasetConfig &c);
void from_json(const json &j, DatasetConfig &c);
void to_json(json &j, const TrialPlan &p);
void from_json(const json &j, TrialPlan &p);

} // namespace pressfit::classifier
