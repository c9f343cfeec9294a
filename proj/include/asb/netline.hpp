#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace asb::net {

struct HostPort {
  std::string host;
  int port = 0;
};

// "host:port" or ":port" or "port"; host defaults to 127.0.0.1.
std::optional<HostPort> parse_hostport(std::string_view text);

// Blocking client for newline-delimited protocols.
class LineClient {
 public:
  LineClient() = default;
  ~LineClient();
  LineClient(LineClient&&) noexcept;
  LineClient& operator=(LineClient&&) noexcept;
  LineClient(const LineClient&) = delete;
  LineClient& operator=(const LineClient&) = delete;

  bool connect(const std::string& host, int port, int timeout_ms = 3000);
  bool send_line(const std::string& line);
  // Returns the next line without its terminator, or nullopt on timeout/EOF.
  std::optional<std::string> recv_line(int timeout_ms = 3000);
  bool connected() const { return fd_ >= 0; }
  void close();

 private:
  int fd_ = -1;
  std::string buf_;
};

// Accepts connections and runs `handler(client_fd)` on a thread per client.
// The handler owns the fd and must close it.
class LineServer {
 public:
  using Handler = std::function<void(int fd)>;

  LineServer() = default;
  ~LineServer();

  // port 0 binds an ephemeral port; the bound port is returned by port().
  bool start(const std::string& host, int port, Handler handler);
  void stop();
  int port() const { return port_; }

 private:
  void accept_loop();

  int listen_fd_ = -1;
  int port_ = 0;
  Handler handler_;
  std::thread accept_thread_;
  std::atomic<bool> running_{false};
  std::vector<std::thread> workers_;
  std::mutex workers_mu_;
};

// Line-oriented reads on a raw fd, used inside server handlers. next_line
// returns nullopt on both timeout and EOF; closed() tells them apart.
class FdLineReader {
 public:
  explicit FdLineReader(int fd) : fd_(fd) {}
  std::optional<std::string> next_line(int timeout_ms = -1);
  bool closed() const { return closed_; }

 private:
  int fd_;
  bool closed_ = false;
  std::string buf_;
};

bool write_all(int fd, std::string_view data);

}  // namespace asb::net
