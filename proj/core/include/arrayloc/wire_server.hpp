#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <list>
#include <mutex>
#include <string>
#include <thread>

#include "arrayloc/fusion_center.hpp"

namespace arrayloc {

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 0;  ///< 0 picks an ephemeral port
  std::size_t buffer_bytes = 64 * 1024;  ///< per-connection read buffer
  std::size_t max_line_bytes = 4096;
};

/// TCP endpoint accepting newline-delimited wire records. One thread per
/// connection; each connection reads into a bounded buffer and hands
/// complete lines to the store, so a slow store throttles the sender
/// through TCP flow control. A line longer than max_line_bytes is rejected;
/// an unterminated tail at disconnect is counted as a partial line.
class WireServer {
 public:
  WireServer(DoaStore& store, ServerOptions options = {});
  ~WireServer();

  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  /// Binds and starts accepting. Throws std::system_error on socket errors.
  void start();
  /// Stops accepting, waits for open connections to drain, flushes storage.
  void stop();

  std::uint16_t port() const { return port_; }
  std::size_t connections_accepted() const { return accepted_.load(); }

 private:
  void accept_loop();
  void serve_connection(int fd);

  DoaStore& store_;
  ServerOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::size_t> accepted_{0};
  std::thread acceptor_;
  std::mutex workers_mutex_;
  std::list<std::thread> workers_;
};

/// Streams every line of `capture` to host:port over one connection.
/// Returns the number of lines sent.
std::size_t replay_capture(std::istream& capture, const std::string& host, std::uint16_t port);

}  // namespace arrayloc
