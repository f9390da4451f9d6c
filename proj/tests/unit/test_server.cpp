#include <doctest.h>

#include "pressfit/harness/harness.hpp"
#include "pressfit/server/session.hpp"
#include "pressfit/server/websocket.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>

using namespace pressfit;
using namespace pressfit::server;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string &name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Next message of `type`, skipping others.
std::optional<json> next_of(WsClient &c, const std::string &type, std::chrono::milliseconds timeout = 5000ms) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    auto text = c.receive(left);
    if (!text) return std::nullopt;
    json j = json::parse(*text);
    if (j.at("type") == type) return j;
  }
  return std::nullopt;
}

// Sends `msg` and returns its reply; ticks received meanwhile go to `ticks`.
json request(WsClient &c, const json &msg, std::vector<json> *ticks = nullptr) {
  json m = msg;
  static int id = 0;
  m["id"] = ++id;
  c.send_text(m.dump());
  for (;;) {
    auto text = c.receive(60000ms);
    REQUIRE(text);
    json j = json::parse(*text);
    if (j.contains("id") && j.at("id") == m.at("id")) return j;
    if (ticks && j.at("type") == "tick") ticks->push_back(j);
  }
}

void send_demo(WsClient &c) {
  REQUIRE(request(c, {{"type", "start_demo"}}).at("type") == "ack");
  for (const TimedPose &p : harness::demo_trajectory()) {
    const json reply = request(c, {{"type", "demo_point"},
                                   {"t", p.time},
                                   {"x", p.pose.position.x()},
                                   {"y", p.pose.position.y()}});
    REQUIRE(reply.at("type") == "ack");
  }
  REQUIRE(request(c, {{"type", "end_demo"}}).at("points") == 21);
}

std::pair<int, int> socket_pair() {
  int fds[2];
  REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
  return {fds[0], fds[1]};
}

} // namespace

TEST_CASE("accept key matches the RFC 6455 sample") {
  CHECK(websocket_accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST_CASE("frames round-trip at every length encoding") {
  auto [a, b] = socket_pair();
  for (std::size_t n : {0, 1, 125, 126, 1000, 65535, 65536, 70000}) {
    std::string payload(n, '\0');
    for (std::size_t i = 0; i < n; ++i) payload[i] = static_cast<char>(i * 7);
    for (bool masked : {false, true}) {
      const std::string frame =
          encode_frame(opcode::text, payload, true, masked ? std::optional<std::uint32_t>(0xA1B2C3D4u) : std::nullopt);
      std::thread writer([&, fd = a] { REQUIRE(::send(fd, frame.data(), frame.size(), 0) == static_cast<ssize_t>(frame.size())); });
      const Frame f = read_frame(b);
      writer.join();
      CHECK(f.fin);
      CHECK(f.opcode == opcode::text);
      CHECK(f.payload == payload);
    }
  }
  ::close(a);
  ::close(b);
}

TEST_CASE("frame reader rejects protocol violations") {
  SUBCASE("oversized control frame") {
    auto [a, b] = socket_pair();
    const std::string frame = encode_frame(opcode::ping, std::string(200, 'x'));
    ::send(a, frame.data(), frame.size(), 0);
    CHECK_THROWS_WITH_AS(read_frame(b), doctest::Contains("control"), Error);
    ::close(a);
    ::close(b);
  }
  SUBCASE("payload over the limit") {
    auto [a, b] = socket_pair();
    const std::string frame = encode_frame(opcode::text, std::string(100, 'x'));
    ::send(a, frame.data(), frame.size(), 0);
    try {
      read_frame(b, 10);
      FAIL("expected ProtocolError");
    } catch (const Error &e) {
      CHECK(e.kind() == "ProtocolError");
    }
    ::close(a);
    ::close(b);
  }
  SUBCASE("closed peer") {
    auto [a, b] = socket_pair();
    ::close(a);
    try {
      read_frame(b);
      FAIL("expected ConnectionClosed");
    } catch (const Error &e) {
      CHECK(e.kind() == "ConnectionClosed");
    }
    ::close(b);
  }
}

TEST_CASE("server echoes and serves static files") {
  TempDir dir("pressfit_test_static");
  std::ofstream(dir.path / "index.html") << "<html>ui</html>";
  WsServer *self = nullptr;
  WsServer server({"127.0.0.1", 0, dir.path.string(), 64}, {},
                  [&](int client, const std::string &text) { self->send(client, "echo:" + text); });
  self = &server;
  server.start();

  WsClient c("127.0.0.1", server.port());
  c.send_text("hi");
  CHECK(c.receive(2000ms) == std::optional<std::string>("echo:hi"));
  const std::string big(100000, 'z');
  c.send_text(big);
  CHECK(c.receive(2000ms) == std::optional<std::string>("echo:" + big));

  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(server.port()));
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr *>(&addr), sizeof(addr)) == 0);
  const std::string req = "GET / HTTP/1.1\r\nHost: x\r\n\r\n";
  ::send(fd, req.data(), req.size(), 0);
  std::string resp;
  char buf[512];
  for (ssize_t r; (r = ::recv(fd, buf, sizeof(buf), 0)) > 0;) resp.append(buf, static_cast<std::size_t>(r));
  ::close(fd);
  CHECK(resp.rfind("HTTP/1.1 200 OK", 0) == 0);
  CHECK(resp.find("<html>ui</html>") != std::string::npos);
  server.stop();
}

TEST_CASE("slow client never blocks broadcasts and keeps undroppable messages") {
  WsServer server({"127.0.0.1", 0, "", 4}, {}, {});
  server.start();
  WsClient slow("127.0.0.1", server.port());
  for (int i = 0; i < 100 && server.client_count() == 0; ++i) std::this_thread::sleep_for(10ms);
  REQUIRE(server.client_count() == 1);

  const std::string chunk(256 * 1024, 't');
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 200; ++i) server.broadcast(chunk, true);
  server.broadcast("marker", false);
  CHECK(std::chrono::steady_clock::now() - t0 < 2s);
  CHECK(server.dropped() > 0);

  bool marker = false;
  while (auto m = slow.receive(2000ms)) {
    if (*m == "marker") {
      marker = true;
      break;
    }
  }
  CHECK(marker);
  server.stop();
}

TEST_CASE("session handles messages without a transport") {
  TempDir dir("pressfit_test_session");
  std::vector<json> sent;
  std::mutex m;
  TeachSession::Options opts;
  opts.artifacts_dir = dir.path.string();
  opts.tick_period = 0.0;
  TeachSession s(opts, [&](const json &j, bool) {
    std::lock_guard lock(m);
    sent.push_back(j);
  });

  SUBCASE("hello") {
    const json h = s.hello();
    CHECK(h.at("schema_version") == kSchemaVersion);
    CHECK(h.at("phase") == "idle");
    CHECK(h.at("has_policy") == false);
    CHECK(h.at("world").contains("container"));
  }
  SUBCASE("feedback while idle is BadPhase and leaves the session intact") {
    const json r = s.handle(json{{"type", "feedback"}, {"x", 0.5}, {"id", 7}});
    CHECK(r.at("type") == "error");
    CHECK(r.at("kind") == "BadPhase");
    CHECK(r.at("id") == 7);
    CHECK(s.phase() == Phase::idle);
    CHECK(s.handle(json{{"type", "start_demo"}}).at("type") == "ack");
    CHECK(s.phase() == Phase::demonstrating);
  }
  SUBCASE("malformed messages echo the offending field") {
    CHECK(s.handle(std::string("{not json")).at("kind") == "MalformedMessage");
    const json unknown = s.handle(json{{"type", "dance"}});
    CHECK(unknown.at("kind") == "MalformedMessage");
    CHECK(unknown.at("field") == "type");
    CHECK(unknown.at("value") == "dance");
    CHECK(s.handle(json{{"x", 1}}).at("field") == "type");

    s.handle(json{{"type", "start_demo"}});
    const json bad_t = s.handle(json{{"type", "demo_point"}, {"t", "soon"}, {"x", 0.7}, {"y", 0.0}});
    CHECK(bad_t.at("field") == "t");
    CHECK(bad_t.at("value") == "soon");
    CHECK(s.handle(json{{"type", "demo_point"}, {"t", 1.0}, {"x", 0.7}, {"y", 0.0}}).at("type") == "ack");
    const json back = s.handle(json{{"type", "demo_point"}, {"t", 0.5}, {"x", 0.7}, {"y", 0.0}});
    CHECK(back.at("field") == "t");
    CHECK(back.at("value") == 0.5);
    CHECK(s.handle(json{{"type", "end_demo"}}).at("type") == "ack");

    const json preset = s.handle(json{{"type", "start_episode"}, {"preset", "moon"}});
    CHECK(preset.at("field") == "preset");
    CHECK(preset.at("value") == "moon");
    CHECK(s.handle(json{{"type", "start_episode"}, {"mode", "fly"}}).at("field") == "mode");
  }
  SUBCASE("episodes need a policy") {
    const json r = s.handle(json{{"type", "start_episode"}, {"mode", "ilosa"}});
    CHECK(r.at("kind") == "MissingArtifacts");
    CHECK(s.phase() == Phase::idle);
  }
  SUBCASE("training on a single point reports the demonstration error") {
    s.handle(json{{"type", "start_demo"}});
    s.handle(json{{"type", "demo_point"}, {"t", 0.0}, {"x", 0.7}, {"y", 0.0}});
    s.handle(json{{"type", "end_demo"}});
    CHECK(s.handle(json{{"type", "train"}}).at("kind") == "TooShort");
  }
  SUBCASE("stop discards a demonstration in progress") {
    s.handle(json{{"type", "start_demo"}});
    s.handle(json{{"type", "demo_point"}, {"t", 0.0}, {"x", 0.7}, {"y", 0.0}});
    CHECK(s.handle(json{{"type", "stop"}}).at("type") == "ack");
    CHECK(s.phase() == Phase::idle);
  }
  SUBCASE("feedback offsets outside [-1, 1] are rejected") {
    harness::save_artifacts(dir.path.string(), {harness::train_policy({}), classifier::ClassifierModel(classifier::ClassifierConfig{})});
    TeachSession::Options paced = opts;
    paced.tick_period = 0.01;
    TeachSession t(paced, {});
    REQUIRE(t.has_policy());
    REQUIRE(t.handle(json{{"type", "start_episode"}, {"mode", "ilosa"}}).at("type") == "ack");
    const json r = t.handle(json{{"type", "feedback"}, {"y", 1.5}});
    CHECK(r.at("kind") == "MalformedMessage");
    CHECK(r.at("field") == "y");
    CHECK(t.handle(json{{"type", "feedback"}, {"y", 1.0}}).at("type") == "ack");
    t.handle(json{{"type", "stop"}});
    CHECK(t.wait_idle(10000ms));
  }
}

TEST_CASE("loopback lifecycle, broadcasts and feedback latency") {
  TempDir dir("pressfit_test_teach");
  TeachServer::Options opts;
  opts.port = 0;
  opts.session.artifacts_dir = dir.path.string();
  TeachServer server(opts);
  server.start();
  const double period_ms = 1000.0 * opts.session.tick_period;

  WsClient a("127.0.0.1", server.port());
  const auto hello = next_of(a, "hello");
  REQUIRE(hello);
  CHECK(hello->at("schema_version") == kSchemaVersion);
  CHECK(hello->at("phase") == "idle");

  // demo_point stream, end_demo, train: the policy snapshot is persisted.
  send_demo(a);
  CHECK_FALSE(fs::exists(dir.path / "policy.json"));
  const json trained = request(a, {{"type", "train"}});
  REQUIRE(trained.at("type") == "ack");
  CHECK(trained.at("samples") == 20);
  REQUIRE(fs::exists(dir.path / "policy.json"));
  const policy::Policy persisted = policy::policy_from_json(read_json_file((dir.path / "policy.json").string()));
  CHECK(persisted.gp_dx[0].size() == 20);

  WsClient b("127.0.0.1", server.port());
  REQUIRE(next_of(b, "hello"));

  std::vector<json> ticks_a;
  REQUIRE(request(a, {{"type", "start_episode"}, {"mode", "ilosa"}, {"preset", "training"}}, &ticks_a).at("type") == "ack");
  CHECK(request(a, {{"type", "start_demo"}}, &ticks_a).at("kind") == "BadPhase");

  // Let the robot move, then push it sideways.
  while (ticks_a.size() < 10) {
    auto t = next_of(a, "tick");
    REQUIRE(t);
    ticks_a.push_back(*t);
  }
  const json fb = request(a, {{"type", "feedback"}, {"x", 0.0}, {"y", 1.0}, {"z", 0.0}}, &ticks_a);
  REQUIRE(fb.at("type") == "ack");

  std::optional<json> absorbed;
  for (const json &t : ticks_a) {
    if (!t.at("feedback").is_null()) absorbed = t;
  }
  for (int i = 0; i < 200 && !absorbed; ++i) {
    auto t = next_of(a, "tick");
    REQUIRE(t);
    ticks_a.push_back(*t);
    if (!t->at("feedback").is_null()) absorbed = *t;
  }
  REQUIRE(absorbed);
  CHECK(absorbed->at("feedback").at("source") == "human");
  CHECK(absorbed->at("feedback").at("offsets")[1] == 1.0);
  REQUIRE(absorbed->contains("feedback_latency_ms"));
  CHECK(absorbed->at("feedback_latency_ms").get<double>() <= period_ms);
  // The attractor shifts toward +y from the absorbing tick on.
  std::size_t at = 0;
  while (ticks_a[at] != *absorbed) ++at;
  REQUIRE(at > 0);
  const json &before = ticks_a[at - 1];
  CHECK(std::abs(before.at("dx")[1].get<double>()) < 1e-3);
  CHECK(absorbed->at("dx")[1].get<double>() > 2e-3);

  for (int i = 0; i < 5; ++i) {
    auto t = next_of(a, "tick");
    REQUIRE(t);
    ticks_a.push_back(*t);
  }
  REQUIRE(request(a, {{"type", "stop"}}, &ticks_a).at("type") == "ack");
  const auto end_a = next_of(a, "episode_end", 10000ms);
  REQUIRE(end_a);
  CHECK(end_a->at("stopped") == true);
  CHECK(server.session().wait_idle(5000ms));

  // Both clients saw the same ticks: b joined before the episode started.
  std::vector<json> ticks_b;
  while (auto t = b.receive(500ms)) {
    json j = json::parse(*t);
    if (j.at("type") == "tick") ticks_b.push_back(j);
    if (j.at("type") == "episode_end") break;
  }
  CHECK(server.dropped() == 0);
  REQUIRE(ticks_b.size() >= ticks_a.size());
  for (std::size_t i = 0; i < ticks_a.size(); ++i) {
    INFO("tick ", ticks_a[i].at("tick"), " vs ", ticks_b[i].at("tick"));
    CHECK(ticks_a[i] == ticks_b[i]);
  }

  // Decimated to about 25 Hz on sim time.
  for (std::size_t i = 1; i < ticks_b.size(); ++i) {
    if (ticks_b[i].at("feedback").is_null() && ticks_b[i].at("event") == "normal") {
      CHECK(std::floor(ticks_b[i].at("t").get<double>() * 25.0) >
            std::floor(ticks_b[i - 1].at("t").get<double>() * 25.0));
    }
  }
  server.stop();
}

TEST_CASE("correction rollout updates the persisted policy") {
  TempDir dir("pressfit_test_correct");
  harness::save_artifacts(dir.path.string(), {harness::train_policy({}), classifier::ClassifierModel(classifier::ClassifierConfig{})});
  const std::string before = read_json_file((dir.path / "policy.json").string()).dump();
  TeachSession::Options opts;
  opts.artifacts_dir = dir.path.string();
  opts.tick_period = 0.002;
  std::atomic<int> ticks{0};
  TeachSession s(opts, [&](const json &j, bool) {
    if (j.at("type") == "tick") ++ticks;
  });
  REQUIRE(s.handle(json{{"type", "start_episode"}, {"teach", true}}).at("mode") == "ilosa");
  CHECK(s.phase() == Phase::correcting);
  while (ticks < 5) std::this_thread::sleep_for(1ms);
  CHECK(s.handle(json{{"type", "feedback"}, {"y", 0.5}}).at("type") == "ack");
  std::this_thread::sleep_for(50ms);
  s.handle(json{{"type", "stop"}});
  REQUIRE(s.wait_idle(10000ms));
  CHECK(read_json_file((dir.path / "policy.json").string()).dump() != before);
}
