#include "pressfit/server/session.hpp"

#include "pressfit/server/websocket.hpp"

#include <cmath>
#include <filesystem>

namespace pressfit::server {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Malformed {
  std::string field;
  json value;
  std::string message;
};

json error_reply(const std::string &kind, const std::string &message) {
  return json{{"type", "error"}, {"kind", kind}, {"message", message}};
}

const json &require(const json &msg, const std::string &field) {
  if (!msg.contains(field)) throw Malformed{field, nullptr, "missing field '" + field + "'"};
  return msg.at(field);
}

double number(const json &msg, const std::string &field) {
  const json &v = require(msg, field);
  if (!v.is_number() || !std::isfinite(v.get<double>())) throw Malformed{field, v, "'" + field + "' must be a finite number"};
  return v.get<double>();
}

double offset(const json &msg, const std::string &field) {
  if (!msg.contains(field)) return 0.0;
  const double v = number(msg, field);
  if (v < -1.0 || v > 1.0) throw Malformed{field, msg.at(field), "'" + field + "' must lie in [-1, 1]"};
  return v;
}

std::string text(const json &msg, const std::string &field) {
  const json &v = require(msg, field);
  if (!v.is_string()) throw Malformed{field, v, "'" + field + "' must be a string"};
  return v.get<std::string>();
}

json tick_message(const runtime::TickTrace &t, std::optional<double> latency_ms) {
  json j{{"type", "tick"},
         {"tick", t.tick},
         {"t", t.time},
         {"pose", vec_to_json(t.ee_pose.position)},
         {"dx", vec_to_json(t.attractor_distance)},
         {"ks", vec_to_json(t.stiffness)},
         {"sigma", t.sigma},
         {"wrench", t.wrench},
         {"event", std::string(runtime::to_string(t.event))},
         {"feedback", nullptr}};
  if (t.feedback) {
    j["feedback"] = json{{"offsets", vec_to_json(t.feedback->offsets)},
                         {"source", std::string(to_string(t.feedback->source))}};
  }
  if (t.predicted) j["predicted"] = std::string(to_string(*t.predicted));
  if (latency_ms) j["feedback_latency_ms"] = *latency_ms;
  return j;
}

} // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
  case Phase::idle: return "idle";
  case Phase::demonstrating: return "demonstrating";
  case Phase::correcting: return "correcting";
  case Phase::executing: return "executing";
  }
  return "idle";
}

struct TeachSession::Job {
  runtime::Mode mode = runtime::Mode::ilosa;
  sim::Scenario scenario;
  bool teach = false;
  policy::Policy policy;
  std::optional<classifier::ClassifierModel> classifier;
  Vec3 demo_goal = Vec3::Zero();
  std::uint64_t seed = 0;
  std::shared_ptr<std::atomic<bool>> stop;
};

TeachSession::TeachSession(Options options, Broadcast broadcast)
    : options_(std::move(options)), broadcast_(std::move(broadcast)) {
  options_.monitor.validate();
  if (options_.tick_period < 0.0 || options_.broadcast_hz <= 0.0) {
    throw Error("InvalidConfig", "tick_period must be non-negative and broadcast_hz positive");
  }
  demo_goal_ = harness::DemoProfile{}.goal;
  const fs::path policy_path = fs::path(options_.artifacts_dir) / "policy.json";
  if (!options_.artifacts_dir.empty() && fs::exists(policy_path)) {
    policy_ = policy::policy_from_json(read_json_file(policy_path.string()));
  }
}

TeachSession::~TeachSession() { stop_episode(); }

json TeachSession::hello() const {
  std::lock_guard lock(mutex_);
  const sim::Scenario scenario = sim::spawn_scenario(options_.world_preset);
  return json{{"type", "hello"},
              {"schema_version", kSchemaVersion},
              {"phase", std::string(to_string(phase_))},
              {"clients", clients_.load()},
              {"has_policy", policy_.has_value()},
              {"world", scenario.world},
              {"start", vec_to_json(scenario.start.position)},
              {"goal", vec_to_json(scenario.goal.position)},
              {"presets", sim::preset_names()},
              {"modes", {"ilosa", "accifr"}},
              {"tick_period", options_.tick_period},
              {"broadcast_hz", options_.broadcast_hz}};
}

Phase TeachSession::phase() const {
  std::lock_guard lock(mutex_);
  return phase_;
}

bool TeachSession::has_policy() const {
  std::lock_guard lock(mutex_);
  return policy_.has_value();
}

bool TeachSession::wait_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return idle_cv_.wait_for(lock, timeout, [&] { return phase_ == Phase::idle; });
}

void TeachSession::set_phase(Phase phase) {
  phase_ = phase;
  if (broadcast_) broadcast_(json{{"type", "phase"}, {"phase", std::string(to_string(phase))}}, false);
  if (phase == Phase::idle) idle_cv_.notify_all();
}

void TeachSession::persist_policy() const {
  if (options_.artifacts_dir.empty() || !policy_) return;
  std::error_code ec;
  fs::create_directories(options_.artifacts_dir, ec);
  if (ec) throw Error("IoError", "cannot create " + options_.artifacts_dir + ": " + ec.message());
  write_json_file((fs::path(options_.artifacts_dir) / "policy.json").string(), policy::policy_to_json(*policy_));
}

json TeachSession::handle(const std::string &message) {
  json msg;
  try {
    msg = json::parse(message);
  } catch (const json::exception &e) {
    json reply = error_reply("MalformedMessage", std::string("invalid JSON: ") + e.what());
    reply["field"] = nullptr;
    reply["value"] = message.substr(0, 200);
    return reply;
  }
  return handle(msg);
}

json TeachSession::handle(const json &msg) {
  json reply;
  std::string type;
  try {
    if (!msg.is_object()) throw Malformed{"", msg, "message must be a JSON object"};
    type = text(msg, "type");
    std::lock_guard lock(mutex_);
    if (type == "start_demo") reply = on_start_demo(msg);
    else if (type == "demo_point") reply = on_demo_point(msg);
    else if (type == "end_demo") reply = on_end_demo(msg);
    else if (type == "train") reply = on_train(msg);
    else if (type == "start_episode") reply = on_start_episode(msg);
    else if (type == "feedback") reply = on_feedback(msg);
    else if (type == "stop") reply = on_stop(msg);
    else throw Malformed{"type", msg.at("type"), "unknown message type '" + type + "'"};
  } catch (const Malformed &m) {
    reply = error_reply("MalformedMessage", m.message);
    reply["field"] = m.field;
    reply["value"] = m.value;
  } catch (const Error &e) {
    reply = error_reply(e.kind(), e.what());
  }
  if (reply.is_null()) reply = json{{"type", "ack"}};
  if (!type.empty()) reply["of"] = type;
  if (msg.is_object() && msg.contains("id")) reply["id"] = msg.at("id");
  return reply;
}

namespace {
Error bad_phase(const std::string &type, Phase phase) {
  return Error("BadPhase", "'" + type + "' is not accepted while " + std::string(to_string(phase)));
}
} // namespace

json TeachSession::on_start_demo(const json &) {
  if (phase_ != Phase::idle) throw bad_phase("start_demo", phase_);
  demo_.clear();
  set_phase(Phase::demonstrating);
  return nullptr;
}

json TeachSession::on_demo_point(const json &msg) {
  if (phase_ != Phase::demonstrating) throw bad_phase("demo_point", phase_);
  const double t = number(msg, "t");
  const double x = number(msg, "x");
  const double y = number(msg, "y");
  if (!demo_.empty() && t <= demo_.back().time) {
    throw Malformed{"t", msg.at("t"), "'t' must strictly increase"};
  }
  demo_.push_back({t, Pose(Vec3(x, y, sim::ee_height()), sim::ee_orientation())});
  return json{{"type", "ack"}, {"points", demo_.size()}};
}

json TeachSession::on_end_demo(const json &) {
  if (phase_ != Phase::demonstrating) throw bad_phase("end_demo", phase_);
  set_phase(Phase::idle);
  return json{{"type", "ack"}, {"points", demo_.size()}};
}

json TeachSession::on_train(const json &) {
  if (phase_ != Phase::idle) throw bad_phase("train", phase_);
  const Demonstration demo = policy::record_demonstration(demo_, options_.policy);
  policy_ = policy::train(demo, options_.policy);
  demo_goal_ = demo_.back().pose.position;
  persist_policy();
  if (broadcast_) broadcast_(json{{"type", "trained"}, {"samples", demo.samples.size()}}, false);
  return json{{"type", "ack"}, {"samples", demo.samples.size()}};
}

json TeachSession::on_start_episode(const json &msg) {
  if (phase_ != Phase::idle) throw bad_phase("start_episode", phase_);
  auto job = std::make_shared<Job>();
  const std::string mode = msg.contains("mode") ? text(msg, "mode") : std::string("accifr");
  try {
    job->mode = runtime::mode_from_string(mode);
  } catch (const Error &) {
    throw Malformed{"mode", msg.at("mode"), "unknown mode '" + mode + "'"};
  }
  const std::string preset = msg.contains("preset") ? text(msg, "preset") : std::string("training");
  try {
    job->scenario = sim::spawn_scenario(preset);
  } catch (const Error &) {
    throw Malformed{"preset", msg.at("preset"), "unknown preset '" + preset + "'"};
  }
  if (msg.contains("teach")) {
    if (!msg.at("teach").is_boolean()) throw Malformed{"teach", msg.at("teach"), "'teach' must be a boolean"};
    job->teach = msg.at("teach").get<bool>();
  }
  if (job->teach) job->mode = runtime::Mode::ilosa;
  if (!policy_) throw Error("MissingArtifacts", "no policy: train one or provide policy.json");
  if (job->mode == runtime::Mode::accifr) {
    if (!classifier_) {
      const fs::path path = fs::path(options_.artifacts_dir) / "classifier.json";
      if (options_.artifacts_dir.empty() || !fs::exists(path)) {
        throw Error("MissingArtifacts", "accifr mode needs " + path.string());
      }
      classifier_ = classifier::model_from_json(read_json_file(path.string()));
    }
    job->classifier = classifier_;
  }
  job->policy = *policy_;
  job->demo_goal = demo_goal_;
  job->seed = options_.seed + episodes_++;
  job->stop = std::make_shared<std::atomic<bool>>(false);

  while (mailbox_.take()) {
  }
  {
    std::lock_guard lock(receipts_mutex_);
    receipts_.clear();
  }
  if (control_.joinable()) control_.join();
  stop_flag_ = job->stop;
  set_phase(job->teach ? Phase::correcting : Phase::executing);
  control_ = std::thread([this, job] { run_control(job); });
  return json{{"type", "ack"}, {"mode", std::string(runtime::to_string(job->mode))}, {"preset", preset}};
}

json TeachSession::on_feedback(const json &msg) {
  if (phase_ != Phase::correcting && phase_ != Phase::executing) throw bad_phase("feedback", phase_);
  const Vec3 offsets(offset(msg, "x"), offset(msg, "y"), offset(msg, "z"));
  {
    std::lock_guard lock(receipts_mutex_);
    receipts_.push_back(Clock::now());
  }
  mailbox_.post(Feedback::capped(offsets, FeedbackSource::human, options_.policy.feedback_cap));
  return nullptr;
}

json TeachSession::on_stop(const json &) {
  if (phase_ == Phase::demonstrating) {
    demo_.clear();
    set_phase(Phase::idle);
  } else if (stop_flag_ && (phase_ == Phase::correcting || phase_ == Phase::executing)) {
    stop_flag_->store(true);
  }
  return nullptr;
}

void TeachSession::stop_episode() {
  std::thread t;
  {
    std::lock_guard lock(mutex_);
    if (stop_flag_) stop_flag_->store(true);
    t = std::move(control_);
  }
  if (t.joinable()) t.join();
}

void TeachSession::run_control(std::shared_ptr<Job> job) {
  runtime::EpisodeOptions opts;
  opts.mode = job->mode;
  opts.monitor = options_.monitor;
  opts.seed = job->seed;
  opts.demo_goal = job->demo_goal;
  opts.keep_ticks = false;
  opts.stop_on_success = !job->teach;

  runtime::ContactPredictor predictor;
  if (job->classifier) predictor = harness::make_predictor(*job->classifier);

  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(options_.tick_period));
  const Clock::time_point t0 = Clock::now();
  Clock::time_point tick_start = t0;
  long last_bucket = -1;

  runtime::EpisodeHooks hooks;
  hooks.mailbox = &mailbox_;
  hooks.stop = job->stop.get();
  hooks.on_tick = [&](const runtime::TickTrace &trace) {
    std::optional<double> latency;
    if (trace.feedback && trace.feedback->source == FeedbackSource::human) {
      std::lock_guard lock(receipts_mutex_);
      if (!receipts_.empty()) {
        const auto wait = std::max(Clock::duration::zero(), tick_start - receipts_.front());
        latency = std::chrono::duration<double, std::milli>(wait).count();
        receipts_.pop_front();
      }
    }
    const long bucket = static_cast<long>(std::floor(trace.time * options_.broadcast_hz));
    const bool important = trace.event != runtime::TickEvent::normal || trace.feedback.has_value();
    if ((bucket != last_bucket || important) && broadcast_) {
      broadcast_(tick_message(trace, latency), !important);
      last_bucket = bucket;
    }
    if (options_.tick_period > 0.0) std::this_thread::sleep_until(t0 + period * (trace.tick + 1));
    tick_start = Clock::now();
  };

  json end{{"type", "episode_end"},
           {"mode", std::string(runtime::to_string(job->mode))},
           {"preset", job->scenario.name},
           {"teach", job->teach}};
  std::optional<policy::Policy> corrected;
  try {
    runtime::Episode ep = runtime::run_episode(job->policy, job->scenario, opts, predictor, hooks);
    end["success"] = ep.record.success;
    end["ticks"] = ep.record.ticks;
    end["collisions"] = ep.record.collisions.size();
    end["stopped"] = job->stop->load();
    if (job->teach) corrected = std::move(ep.final_policy);
  } catch (const Error &e) {
    end["error"] = json{{"kind", e.kind()}, {"message", e.what()}};
  }

  std::lock_guard lock(mutex_);
  if (corrected) {
    policy_ = std::move(corrected);
    try {
      persist_policy();
    } catch (const Error &e) {
      end["error"] = json{{"kind", e.kind()}, {"message", e.what()}};
    }
  }
  if (broadcast_) broadcast_(end, false);
  set_phase(Phase::idle);
}

struct TeachServer::Impl {
  std::unique_ptr<WsServer> ws;
};

TeachServer::TeachServer(Options options) : impl_(std::make_unique<Impl>()) {
  Impl *impl = impl_.get();
  session_ = std::make_unique<TeachSession>(options.session, [impl](const json &msg, bool droppable) {
    if (impl->ws) impl->ws->broadcast(msg.dump(), droppable);
  });
  TeachSession *session = session_.get();
  WsServer::Options ws_options{options.host, options.port, options.static_dir, options.max_queue};
  impl_->ws = std::make_unique<WsServer>(
      ws_options,
      [impl, session](int client) {
        session->set_client_count(impl->ws->client_count());
        impl->ws->send(client, session->hello().dump());
      },
      [impl, session](int client, const std::string &text) { impl->ws->send(client, session->handle(text).dump()); },
      [impl, session](int) { session->set_client_count(impl->ws->client_count()); });
}

TeachServer::~TeachServer() { stop(); }

void TeachServer::start() { impl_->ws->start(); }

void TeachServer::stop() {
  session_->stop_episode();
  impl_->ws->stop();
}

int TeachServer::port() const { return impl_->ws->port(); }

std::size_t TeachServer::dropped() const { return impl_->ws->dropped(); }

} // namespace pressfit::server
