#include "pressfit/runtime/runtime.hpp"

#include <fstream>
#include <random>

namespace pressfit::runtime {

std::string_view to_string(Mode mode) { return mode == Mode::ilosa ? "ilosa" : "accifr"; }

Mode mode_from_string(std::string_view s) {
  if (s == "ilosa") return Mode::ilosa;
  if (s == "accifr") return Mode::accifr;
  throw Error("MalformedMessage", "mode must be 'ilosa' or 'accifr'");
}

std::string_view to_string(TickEvent event) {
  switch (event) {
  case TickEvent::normal:
    return "normal";
  case TickEvent::collision_detected:
    return "collision_detected";
  case TickEvent::recovering:
    return "recovering";
  case TickEvent::success:
    return "success";
  }
  return "normal";
}

TickEvent tick_event_from_string(std::string_view s) {
  for (TickEvent e : {TickEvent::normal, TickEvent::collision_detected, TickEvent::recovering,
                      TickEvent::success}) {
    if (to_string(e) == s) return e;
  }
  throw Error("MalformedMessage", "unknown tick event");
}

void MonitorConfig::validate() const {
  const bool ok = d_th > 0.0 && f_th > 0.0 && stuck_epsilon > 0.0 && stuck_patience >= 2 &&
                  recovery_lateral > 0.0 && recovery_axial >= 0.0 && max_ticks > 0 && substeps > 0 &&
                  window_seconds > 0.0;
  if (!ok) throw Error("InvalidConfig", "monitor thresholds must be positive and stuck_patience >= 2");
}

bool monitor(const Pose &goal, const sim::SimState &state, const MonitorConfig &cfg) {
  return pose_distance(state.ee_pose, goal) < cfg.d_th && state.wrench.force.x() >= cfg.f_th;
}

bool CollisionDetector::update(const Vec3 &prev_dx, const Vec3 &curr_dx, bool at_goal) {
  if (at_goal || (curr_dx - prev_dx).norm() >= cfg_.stuck_epsilon) {
    count_ = 0;
    return false;
  }
  if (++count_ < cfg_.stuck_patience) return false;
  count_ = 0;
  return true;
}

Feedback recover(ContactSide side, const MonitorConfig &cfg, double feedback_cap) {
  const double away = side == ContactSide::left ? 1.0 : -1.0;
  return Feedback::capped(Vec3(cfg.recovery_axial, away * cfg.recovery_lateral, 0.0), FeedbackSource::recovery,
                          feedback_cap);
}

void FeedbackMailbox::post(const Feedback &fb) {
  std::lock_guard lock(mutex_);
  queue_.push_back(fb);
}

std::optional<Feedback> FeedbackMailbox::take() {
  std::lock_guard lock(mutex_);
  if (queue_.empty()) return std::nullopt;
  Feedback fb = queue_.front();
  queue_.pop_front();
  return fb;
}

Episode run_episode(const policy::Policy &initial, const sim::Scenario &scenario,
                    const EpisodeOptions &options, const ContactPredictor &predictor,
                    const EpisodeHooks &hooks) {
  const MonitorConfig &cfg = options.monitor;
  cfg.validate();
  scenario.world.validate();
  if (options.mode == Mode::accifr && !predictor) {
    throw Error("MissingArtifacts", "accifr mode needs a contact-side predictor");
  }

  std::mt19937_64 rng(options.seed);
  Episode ep;
  ep.final_policy = initial;
  policy::Policy &policy = ep.final_policy;

  sim::SimState state;
  state.ee_pose = scenario.start;
  if (options.start_jitter > 0.0) {
    std::uniform_real_distribution<double> jitter(-options.start_jitter, options.start_jitter);
    state.ee_pose.position.x() += jitter(rng);
    state.ee_pose.position.y() += jitter(rng);
  }
  state.attractor = state.ee_pose;
  state.stiffness = policy.config.demo_stiffness;

  const Vec3 frame_shift = options.demo_goal - scenario.goal_estimate.position;
  const std::size_t window = static_cast<std::size_t>(classifier::samples_for(cfg.window_seconds));
  CollisionDetector detector(cfg);
  std::optional<Feedback> pending_recovery;
  std::optional<Vec3> prev_dx;
  TickTrace last;
  last.ee_pose = state.ee_pose;

  RunRecord &rec = ep.record;
  for (long tick = 0; tick < cfg.max_ticks; ++tick) {
    if (hooks.stop != nullptr && hooks.stop->load()) break;

    TickTrace trace;
    trace.tick = tick;
    const Vec3 x = state.ee_pose.position + frame_shift;
    policy::Query q = policy::query(policy, x);

    std::optional<Feedback> fb;
    if (pending_recovery) {
      fb = pending_recovery;
      pending_recovery.reset();
    } else if (hooks.mailbox != nullptr) {
      fb = hooks.mailbox->take();
    }
    if (!fb && hooks.teacher) fb = hooks.teacher(tick, last);
    if (fb && !fb->is_zero()) {
      policy = policy::absorb_feedback(policy, x, *fb).policy;
      trace.feedback = fb;
      if (fb->source == FeedbackSource::recovery) trace.event = TickEvent::recovering;
      q = policy::query(policy, x);
    }

    const bool at_goal = pose_distance(state.ee_pose, scenario.goal) < cfg.d_th;
    const bool stuck = options.mode == Mode::accifr && prev_dx && trace.event != TickEvent::recovering &&
                       detector.update(*prev_dx, q.dx, at_goal);
    if (stuck) {
      const Prediction p = predictor(classifier::latest_window(rec.wrench_log, window));
      trace.event = TickEvent::collision_detected;
      trace.predicted = p.side;
      pending_recovery = recover(p.side, cfg, policy.config.feedback_cap);
      rec.collisions.push_back({state.time, p.side, false});
      ++ep.recoveries;
    } else {
      const Vec3 f_stable = policy::stabilization(policy, x);
      const policy::ControlCommand cmd = policy::modulate(policy, q.dx, q.ks, f_stable, q.sigma);
      state.attractor.position = state.ee_pose.position + cmd.attractor_distance;
      state.stiffness = cmd.stiffness;
    }
    prev_dx = q.dx;

    for (int i = 0; i < cfg.substeps; ++i) state = sim::step(state, scenario.world, &rng);

    rec.trajectory.push_back({state.time, state.ee_pose});
    rec.wrench_log.push_back({state.time, state.wrench});
    rec.ticks = tick + 1;

    const bool success = options.mode == Mode::accifr
                             ? monitor(scenario.goal, state, cfg)
                             : pose_distance(state.ee_pose, scenario.goal) < cfg.d_th;
    trace.time = state.time;
    trace.ee_pose = state.ee_pose;
    trace.attractor_distance = state.attractor.position - state.ee_pose.position;
    trace.stiffness = state.stiffness;
    trace.sigma = q.sigma;
    trace.wrench = state.wrench;
    if (success) trace.event = TickEvent::success;
    if (hooks.on_tick) hooks.on_tick(trace);
    if (options.keep_ticks) ep.ticks.push_back(trace);
    last = trace;
    rec.success = success;
    if (success && options.stop_on_success) break;
  }
  if (rec.success) {
    for (auto &c : rec.collisions) c.recovered = true;
  }
  return ep;
}

bool replay_success(const RunRecord &record, const sim::Scenario &scenario, Mode mode,
                    const MonitorConfig &cfg) {
  if (record.trajectory.empty() || record.wrench_log.empty()) return false;
  sim::SimState s;
  s.ee_pose = record.trajectory.back().pose;
  s.wrench = record.wrench_log.back().wrench;
  if (mode == Mode::ilosa) return pose_distance(s.ee_pose, scenario.goal) < cfg.d_th;
  return monitor(scenario.goal, s, cfg);
}

void to_json(json &j, const MonitorConfig &c) {
  j = json{{"d_th", c.d_th},
           {"f_th", c.f_th},
           {"stuck_epsilon", c.stuck_epsilon},
           {"stuck_patience", c.stuck_patience},
           {"recovery_lateral", c.recovery_lateral},
           {"recovery_axial", c.recovery_axial},
           {"max_ticks", c.max_ticks},
           {"substeps", c.substeps},
           {"window_seconds", c.window_seconds}};
}

void from_json(const json &j, MonitorConfig &c) {
  c = MonitorConfig{};
  const auto read = [&](const char *key, auto &field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  read("d_th", c.d_th);
  read("f_th", c.f_th);
  read("stuck_epsilon", c.stuck_epsilon);
  read("stuck_patience", c.stuck_patience);
  read("recovery_lateral", c.recovery_lateral);
  read("recovery_axial", c.recovery_axial);
  read("max_ticks", c.max_ticks);
  read("substeps", c.substeps);
  read("window_seconds", c.window_seconds);
}

void to_json(json &j, const TickTrace &t) {
  j = json{{"tick", t.tick},
           {"t", t.time},
           {"pose", t.ee_pose},
           {"attractor_distance", vec_to_json(t.attractor_distance)},
           {"stiffness", vec_to_json(t.stiffness)},
           {"sigma", t.sigma},
           {"wrench", t.wrench},
           {"event", std::string(to_string(t.event))}};
  if (t.predicted) j["predicted"] = std::string(to_string(*t.predicted));
  if (t.feedback) {
    j["feedback"] = {{"offsets", vec_to_json(t.feedback->offsets)},
                     {"source", std::string(to_string(t.feedback->source))}};
  }
}

void save_run_record(const std::string &stem, const RunRecord &record) {
  write_json_file(stem + ".json", record);
  std::ofstream out(stem + "_wrench.csv", std::ios::binary);
  if (!out) throw Error("IoError", "cannot write " + stem + "_wrench.csv");
  write_wrench_csv(out, record.wrench_log);
}

} // namespace pressfit::runtime
