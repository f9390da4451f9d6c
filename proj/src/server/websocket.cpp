#include "pressfit/server/websocket.hpp"

#include "pressfit/core/types.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace pressfit::server {

namespace {

constexpr const char *kWebSocketGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
constexpr std::size_t kMaxHeaderBytes = 8192;

std::string base64(const unsigned char *data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char *>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

void read_exact(int fd, char *buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) throw Error("ConnectionClosed", "peer closed the connection");
    if (r < 0) {
      if (errno == EINTR) continue;
      throw Error("ConnectionClosed", std::string("recv: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
}

bool send_all(int fd, const std::string &data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t r = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(r);
  }
  return true;
}

// Reads an HTTP header block up to and including the blank line.
std::string read_http_head(int fd) {
  std::string head;
  char c;
  while (head.size() < kMaxHeaderBytes) {
    read_exact(fd, &c, 1);
    head.push_back(c);
    if (head.size() >= 4 && head.compare(head.size() - 4, 4, "\r\n\r\n") == 0) return head;
  }
  throw Error("ProtocolError", "HTTP header too large");
}

struct HttpHead {
  std::string method;
  std::string target;
  std::string status_line;
  std::map<std::string, std::string> headers; // lower-case keys
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

HttpHead parse_http_head(const std::string &head) {
  HttpHead out;
  std::istringstream in(head);
  std::string line;
  std::getline(in, line);
  out.status_line = trim(line);
  std::istringstream first(out.status_line);
  first >> out.method >> out.target;
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    out.headers[lower(trim(line.substr(0, colon)))] = trim(line.substr(colon + 1));
  }
  return out;
}

std::string content_type(const std::filesystem::path &p) {
  const std::string ext = lower(p.extension().string());
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

std::string http_response(const std::string &status, const std::string &type, const std::string &body) {
  std::ostringstream out;
  out << "HTTP/1.1 " << status << "\r\nContent-Type: " << type << "\r\nContent-Length: " << body.size()
      << "\r\nConnection: close\r\n\r\n"
      << body;
  return out.str();
}

} // namespace

std::string websocket_accept_key(const std::string &client_key) {
  const std::string in = client_key + kWebSocketGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char *>(in.data()), in.size(), digest);
  return base64(digest, sizeof(digest));
}

std::string encode_frame(std::uint8_t op, const std::string &payload, bool fin, std::optional<std::uint32_t> mask) {
  std::string out;
  out.push_back(static_cast<char>((fin ? 0x80 : 0x00) | (op & 0x0F)));
  const std::uint8_t mask_bit = mask ? 0x80 : 0x00;
  const std::uint64_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mask_bit | n));
  } else if (n < 65536) {
    out.push_back(static_cast<char>(mask_bit | 126));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(mask_bit | 127));
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xFF));
  }
  if (!mask) return out + payload;
  unsigned char key[4];
  for (int i = 0; i < 4; ++i) key[i] = static_cast<unsigned char>((*mask >> (24 - 8 * i)) & 0xFF);
  out.append(reinterpret_cast<const char *>(key), 4);
  for (std::size_t i = 0; i < payload.size(); ++i) out.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return out;
}

Frame read_frame(int fd, std::size_t max_payload) {
  unsigned char head[2];
  read_exact(fd, reinterpret_cast<char *>(head), 2);
  Frame f;
  f.fin = (head[0] & 0x80) != 0;
  if ((head[0] & 0x70) != 0) throw Error("ProtocolError", "reserved bits set");
  f.opcode = head[0] & 0x0F;
  const bool masked = (head[1] & 0x80) != 0;
  std::uint64_t n = head[1] & 0x7F;
  if (n == 126) {
    unsigned char ext[2];
    read_exact(fd, reinterpret_cast<char *>(ext), 2);
    n = (static_cast<std::uint64_t>(ext[0]) << 8) | ext[1];
  } else if (n == 127) {
    unsigned char ext[8];
    read_exact(fd, reinterpret_cast<char *>(ext), 8);
    n = 0;
    for (unsigned char b : ext) n = (n << 8) | b;
  }
  if ((f.opcode & 0x08) != 0 && (n > 125 || !f.fin)) throw Error("ProtocolError", "invalid control frame");
  if (n > max_payload) throw Error("ProtocolError", "frame too large");
  unsigned char key[4] = {0, 0, 0, 0};
  if (masked) read_exact(fd, reinterpret_cast<char *>(key), 4);
  f.payload.resize(static_cast<std::size_t>(n));
  if (n > 0) read_exact(fd, f.payload.data(), static_cast<std::size_t>(n));
  if (masked) {
    for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] = static_cast<char>(f.payload[i] ^ key[i % 4]);
  }
  return f;
}

struct WsServer::Client {
  int id = 0;
  int fd = -1;
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<std::pair<std::string, bool>> queue;
  bool open = true;
  std::thread writer;
};

WsServer::WsServer(Options options, ConnectHandler on_connect, MessageHandler on_message,
                   ConnectHandler on_disconnect)
    : options_(std::move(options)), on_connect_(std::move(on_connect)), on_message_(std::move(on_message)),
      on_disconnect_(std::move(on_disconnect)) {}

WsServer::~WsServer() { stop(); }

void WsServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error("IoError", std::string("socket: ") + std::strerror(errno));
  int yes = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(options_.port));
  const std::string host = options_.host == "localhost" ? "127.0.0.1" : options_.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw Error("IoError", "invalid listen address " + options_.host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr *>(&addr), sizeof(addr)) != 0 || ::listen(listen_fd_, 16) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw Error("IoError", "cannot listen on " + options_.host + ":" + std::to_string(options_.port) + ": " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr *>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void WsServer::stop() {
  if (!running_.exchange(false)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  ::close(listen_fd_);
  {
    std::lock_guard lock(clients_mutex_);
    for (auto &[id, c] : clients_) ::shutdown(c->fd, SHUT_RDWR);
  }
  for (auto &t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
}

void WsServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    auto client = std::make_shared<Client>();
    client->fd = fd;
    {
      std::lock_guard lock(clients_mutex_);
      client->id = next_id_++;
    }
    threads_.emplace_back([this, client] { serve(client); });
  }
}

bool WsServer::handshake(Client &client) {
  const HttpHead req = parse_http_head(read_http_head(client.fd));
  const auto upgrade = req.headers.find("upgrade");
  const auto key = req.headers.find("sec-websocket-key");
  if (upgrade != req.headers.end() && lower(upgrade->second) == "websocket" && key != req.headers.end()) {
    const std::string resp = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                             "Sec-WebSocket-Accept: " +
                             websocket_accept_key(key->second) + "\r\n\r\n";
    return send_all(client.fd, resp);
  }
  std::string response = http_response("404 Not Found", "text/plain", "not found\n");
  if (req.method == "GET" && !options_.static_dir.empty()) {
    std::string target = req.target.substr(0, req.target.find('?'));
    if (target == "/" || target.empty()) target = "/index.html";
    const std::filesystem::path path = std::filesystem::path(options_.static_dir) / target.substr(1);
    std::ifstream in(path, std::ios::binary);
    if (target.find("..") == std::string::npos && in) {
      std::ostringstream body;
      body << in.rdbuf();
      response = http_response("200 OK", content_type(path), body.str());
    }
  }
  send_all(client.fd, response);
  return false;
}

void WsServer::serve(std::shared_ptr<Client> client) {
  bool upgraded = false;
  try {
    upgraded = handshake(*client);
  } catch (const std::exception &) {
  }
  if (!upgraded || !running_) {
    ::close(client->fd);
    return;
  }
  {
    std::lock_guard lock(clients_mutex_);
    clients_[client->id] = client;
  }
  client->writer = std::thread([this, client] { writer(client); });
  if (on_connect_) on_connect_(client->id);

  std::string message;
  bool in_message = false;
  try {
    for (;;) {
      Frame f = read_frame(client->fd);
      if (f.opcode == opcode::close) {
        enqueue(*client, encode_frame(opcode::close, f.payload.substr(0, 2)), false);
        break;
      }
      if (f.opcode == opcode::ping) {
        enqueue(*client, encode_frame(opcode::pong, f.payload), false);
        continue;
      }
      if (f.opcode == opcode::pong) continue;
      if (f.opcode == opcode::text || f.opcode == opcode::binary) {
        if (in_message) throw Error("ProtocolError", "new message inside a fragmented one");
        message = std::move(f.payload);
        in_message = !f.fin;
      } else if (f.opcode == opcode::continuation) {
        if (!in_message) throw Error("ProtocolError", "unexpected continuation frame");
        message += f.payload;
        in_message = !f.fin;
      } else {
        throw Error("ProtocolError", "unknown opcode");
      }
      if (!in_message && on_message_) on_message_(client->id, message);
    }
  } catch (const std::exception &) {
  }
  close_client(*client);
}

void WsServer::writer(std::shared_ptr<Client> client) {
  for (;;) {
    std::string frame;
    {
      std::unique_lock lock(client->mutex);
      client->cv.wait(lock, [&] { return !client->queue.empty() || !client->open; });
      if (client->queue.empty()) return;
      frame = std::move(client->queue.front().first);
      client->queue.pop_front();
    }
    if (!send_all(client->fd, frame)) {
      ::shutdown(client->fd, SHUT_RDWR);
      return;
    }
  }
}

void WsServer::enqueue(Client &client, const std::string &frame, bool droppable) {
  std::lock_guard lock(client.mutex);
  if (!client.open) return;
  if (client.queue.size() >= options_.max_queue) {
    const auto victim = std::find_if(client.queue.begin(), client.queue.end(), [](const auto &e) { return e.second; });
    if (victim != client.queue.end()) {
      client.queue.erase(victim);
      ++dropped_;
    } else if (droppable) {
      ++dropped_;
      return;
    }
  }
  client.queue.emplace_back(frame, droppable);
  client.cv.notify_one();
}

void WsServer::close_client(Client &client) {
  {
    std::lock_guard lock(client.mutex);
    client.open = false;
  }
  client.cv.notify_all();
  if (client.writer.joinable()) client.writer.join();
  {
    std::lock_guard lock(clients_mutex_);
    clients_.erase(client.id);
  }
  ::close(client.fd);
  if (on_disconnect_) on_disconnect_(client.id);
}

void WsServer::send(int client, const std::string &text, bool droppable) {
  std::shared_ptr<Client> c;
  {
    std::lock_guard lock(clients_mutex_);
    const auto it = clients_.find(client);
    if (it == clients_.end()) return;
    c = it->second;
  }
  enqueue(*c, encode_frame(opcode::text, text), droppable);
}

void WsServer::broadcast(const std::string &text, bool droppable) {
  const std::string frame = encode_frame(opcode::text, text);
  std::vector<std::shared_ptr<Client>> targets;
  {
    std::lock_guard lock(clients_mutex_);
    for (auto &[id, c] : clients_) targets.push_back(c);
  }
  for (auto &c : targets) enqueue(*c, frame, droppable);
}

std::size_t WsServer::client_count() const {
  std::lock_guard lock(clients_mutex_);
  return clients_.size();
}

WsClient::WsClient(const std::string &host, int port, const std::string &path) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error("IoError", std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  const std::string h = host == "localhost" ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, h.c_str(), &addr.sin_addr) != 1 ||
      ::connect(fd_, reinterpret_cast<sockaddr *>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw Error("IoError", "cannot connect to " + host + ":" + std::to_string(port));
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  unsigned char nonce[16];
  for (int i = 0; i < 16; ++i) nonce[i] = static_cast<unsigned char>(i * 37 + port);
  const std::string key = base64(nonce, sizeof(nonce));
  const std::string req = "GET " + path + " HTTP/1.1\r\nHost: " + host + ":" + std::to_string(port) +
                          "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                          "\r\nSec-WebSocket-Version: 13\r\n\r\n";
  try {
    if (!send_all(fd_, req)) throw Error("IoError", "handshake send failed");
    const HttpHead resp = parse_http_head(read_http_head(fd_));
    const auto accept = resp.headers.find("sec-websocket-accept");
    if (resp.status_line.find(" 101 ") == std::string::npos || accept == resp.headers.end() ||
        accept->second != websocket_accept_key(key)) {
      throw Error("IoError", "websocket handshake rejected: " + resp.status_line);
    }
  } catch (const Error &e) {
    ::close(fd_);
    if (e.kind() == "IoError") throw;
    throw Error("IoError", e.what());
  }
}

WsClient::~WsClient() {
  if (fd_ >= 0) ::close(fd_);
}

void WsClient::send_text(const std::string &text) {
  mask_state_ ^= mask_state_ << 13;
  mask_state_ ^= mask_state_ >> 17;
  mask_state_ ^= mask_state_ << 5;
  if (fd_ < 0 || !send_all(fd_, encode_frame(opcode::text, text, true, mask_state_))) {
    throw Error("IoError", "websocket send failed");
  }
}

std::optional<std::string> WsClient::receive(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (fd_ >= 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    pollfd p{fd_, POLLIN, 0};
    if (left.count() <= 0 || ::poll(&p, 1, static_cast<int>(left.count())) <= 0) return std::nullopt;
    try {
      Frame f = read_frame(fd_);
      if (f.opcode == opcode::text) return f.payload;
      if (f.opcode == opcode::ping) send_all(fd_, encode_frame(opcode::pong, f.payload, true, mask_state_));
      if (f.opcode == opcode::close) return std::nullopt;
    } catch (const Error &) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

void WsClient::close() {
  if (fd_ < 0) return;
  send_all(fd_, encode_frame(opcode::close, "", true, mask_state_));
  ::shutdown(fd_, SHUT_RDWR);
  ::close(fd_);
  fd_ = -1;
}

} // namespace pressfit::server
