#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace pressfit::server {

/// Sec-WebSocket-Accept value for a client key.
std::string websocket_accept_key(const std::string &client_key);

/// Encodes one frame. Client frames must be masked; server frames are not.
std::string encode_frame(std::uint8_t opcode, const std::string &payload, bool fin = true,
                         std::optional<std::uint32_t> mask = std::nullopt);

struct Frame {
  bool fin = true;
  std::uint8_t opcode = 0;
  std::string payload;
};

/// Blocking reader of frames from a socket. Unmasks payloads. Throws
/// Error{"ProtocolError"} on malformed input and Error{"ConnectionClosed"} on EOF.
Frame read_frame(int fd, std::size_t max_payload = 1 << 20);

namespace opcode {
constexpr std::uint8_t continuation = 0x0;
constexpr std::uint8_t text = 0x1;
constexpr std::uint8_t binary = 0x2;
constexpr std::uint8_t close = 0x8;
constexpr std::uint8_t ping = 0x9;
constexpr std::uint8_t pong = 0xA;
} // namespace opcode

/// Minimal text-only WebSocket server over POSIX sockets. Each client has a
/// reader thread and a writer thread fed by a bounded queue: when full, the
/// oldest droppable message goes first; other messages are never dropped.
/// Plain HTTP GETs are answered from `static_dir` when set.
class WsServer {
public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = 0; // 0: ephemeral
    std::string static_dir;
    std::size_t max_queue = 64;
  };
  using ConnectHandler = std::function<void(int client)>;
  using MessageHandler = std::function<void(int client, const std::string &text)>;

  WsServer(Options options, ConnectHandler on_connect, MessageHandler on_message, ConnectHandler on_disconnect = {});
  ~WsServer();
  WsServer(const WsServer &) = delete;
  WsServer &operator=(const WsServer &) = delete;

  /// Binds and starts accepting. Throws Error{"IoError"}.
  void start();
  void stop();
  int port() const { return port_; }

  void send(int client, const std::string &text, bool droppable = false);
  void broadcast(const std::string &text, bool droppable = false);
  std::size_t client_count() const;
  /// Messages dropped from full queues since start.
  std::size_t dropped() const { return dropped_.load(); }

private:
  struct Client;
  void accept_loop();
  void serve(std::shared_ptr<Client> client);
  void writer(std::shared_ptr<Client> client);
  bool handshake(Client &client);
  void enqueue(Client &client, const std::string &frame, bool droppable);
  void close_client(Client &client);

  Options options_;
  ConnectHandler on_connect_;
  MessageHandler on_message_;
  ConnectHandler on_disconnect_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::size_t> dropped_{0};
  std::thread accept_thread_;
  mutable std::mutex clients_mutex_;
  std::map<int, std::shared_ptr<Client>> clients_;
  std::vector<std::thread> threads_;
  int next_id_ = 1;
};

/// Blocking WebSocket client for tools and tests.
class WsClient {
public:
  /// Connects and performs the opening handshake. Throws Error{"IoError"}.
  WsClient(const std::string &host, int port, const std::string &path = "/");
  ~WsClient();
  WsClient(const WsClient &) = delete;
  WsClient &operator=(const WsClient &) = delete;

  void send_text(const std::string &text);
  /// Next text message, or nullopt on timeout or close.
  std::optional<std::string> receive(std::chrono::milliseconds timeout);
  void close();

private:
  int fd_ = -1;
  std::uint32_t mask_state_ = 0x12345678u;
};

} // namespace pressfit::server
