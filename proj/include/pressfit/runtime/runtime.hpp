#pragma once

#include "pressfit/classifier/model.hpp"
#include "pressfit/core/serialization.hpp"
#include "pressfit/policy/policy.hpp"
#include "pressfit/sim/world.hpp"

#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace pressfit::runtime {

enum class Mode { ilosa, accifr };
enum class TickEvent { normal, collision_detected, recovering, success };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view s);
std::string_view to_string(TickEvent event);
TickEvent tick_event_from_string(std::string_view s);

struct MonitorConfig {
  double d_th = 0.005;          // m
  double f_th = 2.0;            // N along +x of the sensed force
  double stuck_epsilon = 1e-6;  // m
  int stuck_patience = 5;       // ticks
  double recovery_lateral = 0.3; // feedback units away from the contact side
  double recovery_axial = 0.1;   // feedback units toward the goal
  long max_ticks = 870;
  int substeps = 30;             // sim steps per control tick
  double window_seconds = 0.5;   // classifier history

  /// Throws Error{"InvalidConfig"}.
  void validate() const;
  bool operator==(const MonitorConfig &) const = default;
};

struct TickTrace {
  long tick = 0;
  double time = 0.0;
  Pose ee_pose;
  Vec3 attractor_distance = Vec3::Zero();
  Vec3 stiffness = Vec3::Zero();
  double sigma = 0.0;
  Wrench wrench;
  TickEvent event = TickEvent::normal;
  std::optional<ContactSide> predicted;
  std::optional<Feedback> feedback; // absorbed before this tick's query
};

/// Pose within d_th of the goal and sensed press force at least f_th.
bool monitor(const Pose &goal, const sim::SimState &state, const MonitorConfig &cfg);

/// Attractor stagnation: |curr - prev| < stuck_epsilon for stuck_patience
/// consecutive ticks away from the goal. The count restarts after each
/// detection and whenever the end effector is at the goal.
class CollisionDetector {
public:
  explicit CollisionDetector(const MonitorConfig &cfg) : cfg_(cfg) {}
  bool update(const Vec3 &prev_dx, const Vec3 &curr_dx, bool at_goal);
  int count() const { return count_; }

private:
  MonitorConfig cfg_;
  int count_ = 0;
};

/// Recovery feedback: a lateral offset away from the contact side plus a
/// goal-ward axial component. "left" is the carton's -y side, so a left
/// contact yields a +y offset.
Feedback recover(ContactSide side, const MonitorConfig &cfg, double feedback_cap = 1.0);

using classifier::Prediction;
using ContactPredictor = std::function<Prediction(const classifier::WrenchWindow &)>;

/// Thread-safe single-producer feedback queue drained by the control loop
/// between ticks.
class FeedbackMailbox {
public:
  void post(const Feedback &fb);
  std::optional<Feedback> take();

private:
  std::mutex mutex_;
  std::deque<Feedback> queue_;
};

struct EpisodeOptions {
  Mode mode = Mode::accifr;
  MonitorConfig monitor;
  std::uint64_t seed = 0;
  /// Goal the demonstration ended at. The policy is queried in a frame that
  /// maps the scenario's goal estimate onto this point.
  Vec3 demo_goal = Vec3(0.80, -0.05, 0.43);
  /// Uniform start jitter half-width per planar axis, drawn from the seed.
  double start_jitter = 0.0;
  /// Keep per-tick traces in the result.
  bool keep_ticks = true;
  /// Training rollouts keep running after the goal is reached.
  bool stop_on_success = true;
};

struct EpisodeHooks {
  /// Teacher feedback for `tick`, given the previous tick's trace (on tick 0
  /// only its pose, the start, is set). Consulted when no recovery or mailbox feedback is pending.
  std::function<std::optional<Feedback>(long tick, const TickTrace &last)> teacher;
  FeedbackMailbox *mailbox = nullptr;
  std::function<void(const TickTrace &)> on_tick;
  const std::atomic<bool> *stop = nullptr;
};

struct Episode {
  RunRecord record;
  std::vector<TickTrace> ticks;
  policy::Policy final_policy;
  long recoveries = 0;
};

/// Runs one trial of the control loop until success, stop or max_ticks.
/// Mode ilosa never checks for collisions and declares success on distance
/// alone; mode accifr requires the full monitor and needs a predictor.
Episode run_episode(const policy::Policy &policy, const sim::Scenario &scenario,
                    const EpisodeOptions &options, const ContactPredictor &predictor = {},
                    const EpisodeHooks &hooks = {});

/// Success replayed from the record's last logged pose and wrench.
bool replay_success(const RunRecord &record, const sim::Scenario &scenario, Mode mode,
                    const MonitorConfig &cfg);

void to_json(json &j, const MonitorConfig &c);
void from_json(const json &j, MonitorConfig &c);
void to_json(json &j, const TickTrace &t);

/// Writes <stem>.json (RunRecord) and <stem>_wrench.csv.
void save_run_record(const std::string &stem, const RunRecord &record);

} // namespace pressfit::runtime
