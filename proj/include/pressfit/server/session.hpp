#pragma once

#include "pressfit/harness/harness.hpp"
#include "pressfit/runtime/runtime.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace pressfit::server {

constexpr int kSchemaVersion = 1;

enum class Phase { idle, demonstrating, correcting, executing };
std::string_view to_string(Phase phase);

/// Transport-independent teaching session. Message handling is serialized by
/// an internal mutex; episodes run on a dedicated control thread.
class TeachSession {
public:
  struct Options {
    /// policy.json is loaded from here at start and written after training
    /// and correction rollouts; classifier.json is read for accifr episodes.
    std::string artifacts_dir;
    double tick_period = 1.0 / 29.0; // s of wall time per control tick; 0 runs unpaced
    double broadcast_hz = 25.0;      // tick decimation, on sim time
    runtime::MonitorConfig monitor;
    policy::PolicyConfig policy;
    std::uint64_t seed = 0;
    std::string world_preset = "training"; // sent in the hello message
  };
  /// Receives every broadcast. Droppable messages may be discarded by a slow
  /// transport.
  using Broadcast = std::function<void(const json &message, bool droppable)>;

  TeachSession(Options options, Broadcast broadcast);
  ~TeachSession();
  TeachSession(const TeachSession &) = delete;
  TeachSession &operator=(const TeachSession &) = delete;

  /// Greeting sent to each new client.
  json hello() const;
  /// Handles one client message and returns the reply (ack or error).
  json handle(const std::string &text);
  json handle(const json &message);

  Phase phase() const;
  bool has_policy() const;
  /// Stops a running episode and waits for its thread.
  void stop_episode();
  /// Blocks until the phase is idle or the timeout passes.
  bool wait_idle(std::chrono::milliseconds timeout) const;
  void set_client_count(std::size_t n) { clients_ = n; }

private:
  json on_start_demo(const json &msg);
  json on_demo_point(const json &msg);
  json on_end_demo(const json &msg);
  json on_train(const json &msg);
  json on_start_episode(const json &msg);
  json on_feedback(const json &msg);
  json on_stop(const json &msg);
  void set_phase(Phase phase);
  struct Job;
  void run_control(std::shared_ptr<Job> job);
  void persist_policy() const;

  Options options_;
  Broadcast broadcast_;
  mutable std::mutex mutex_;
  mutable std::condition_variable idle_cv_;
  Phase phase_ = Phase::idle;
  std::optional<policy::Policy> policy_;
  std::optional<classifier::ClassifierModel> classifier_;
  std::vector<TimedPose> demo_;
  Vec3 demo_goal_ = Vec3(0.80, -0.05, 0.43);
  std::thread control_;
  std::shared_ptr<std::atomic<bool>> stop_flag_;
  runtime::FeedbackMailbox mailbox_;
  std::mutex receipts_mutex_;
  std::deque<std::chrono::steady_clock::time_point> receipts_;
  std::uint64_t episodes_ = 0;
  std::atomic<std::size_t> clients_{0};
};

/// Session plus WebSocket transport.
class TeachServer {
public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = 8765;
    std::string static_dir;
    std::size_t max_queue = 64;
    TeachSession::Options session;
  };

  explicit TeachServer(Options options);
  ~TeachServer();
  void start();
  void stop();
  int port() const;
  TeachSession &session() { return *session_; }
  std::size_t dropped() const;

private:
  struct Impl;
  std::unique_ptr<TeachSession> session_;
  std::unique_ptr<Impl> impl_;
};

} // namespace pressfit::server
