#include "arrayloc/wire_server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <istream>
#include <string_view>
#include <system_error>
#include <vector>

#include "arrayloc/errors.hpp"

namespace arrayloc {
namespace {

[[noreturn]] void throw_errno(const char* what) { throw std::system_error(errno, std::generic_category(), what); }

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

constexpr int kPollMs = 50;

}  // namespace

WireServer::WireServer(DoaStore& store, ServerOptions options) : store_(store), options_(std::move(options)) {
  if (options_.buffer_bytes < 2 || options_.max_line_bytes == 0) {
    throw InvalidArgument("server buffers must be non-empty");
  }
}

WireServer::~WireServer() { stop(); }

void WireServer::start() {
  if (running_) return;
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw_errno("socket");
  const int yes = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options_.port);
  if (::inet_pton(AF_INET, options_.bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw InvalidArgument("bad bind address " + options_.bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(listen_fd_, 64) < 0) {
    const int err = errno;
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw std::system_error(err, std::generic_category(), "bind/listen");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void WireServer::accept_loop() {
  while (running_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, kPollMs);
    if (ready <= 0 || !(pfd.revents & POLLIN)) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    ++accepted_;
    std::lock_guard<std::mutex> lock(workers_mutex_);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void WireServer::serve_connection(int raw_fd) {
  Fd fd(raw_fd);
  std::vector<char> buffer(options_.buffer_bytes);
  std::size_t used = 0;
  bool discarding = false;  // inside an over-long line
  while (true) {
    pollfd pfd{fd.get(), POLLIN, 0};
    const int ready = ::poll(&pfd, 1, kPollMs);
    if (ready == 0) {
      if (!running_) break;
      continue;
    }
    if (ready < 0) {
      if (errno == EINTR) continue;
      break;
    }
    const ssize_t n = ::recv(fd.get(), buffer.data() + used, buffer.size() - used, 0);
    if (n < 0 && (errno == EINTR || errno == EAGAIN)) continue;
    if (n <= 0) break;
    used += static_cast<std::size_t>(n);

    std::size_t start = 0;
    for (std::size_t i = 0; i < used; ++i) {
      if (buffer[i] != '\n') continue;
      if (discarding) {
        discarding = false;
      } else {
        const std::string_view line(buffer.data() + start, i - start);
        if (line.size() > options_.max_line_bytes) {
          store_.ingest_line(std::string_view{});  // counted as rejected
        } else if (!line.empty() && line != "\r") {
          store_.ingest_line(line);
        }
      }
      start = i + 1;
    }
    // Keep the unterminated tail; drop it if it can no longer fit a line.
    const std::size_t tail = used - start;
    if (tail > options_.max_line_bytes || (tail == buffer.size())) {
      if (!discarding) store_.ingest_line(std::string_view{});
      discarding = true;
      used = 0;
    } else {
      std::copy(buffer.begin() + static_cast<std::ptrdiff_t>(start),
                buffer.begin() + static_cast<std::ptrdiff_t>(used), buffer.begin());
      used = tail;
    }
  }
  if (used > 0 && !discarding) store_.note_partial_line();
}

void WireServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  std::list<std::thread> workers;
  {
    std::lock_guard<std::mutex> lock(workers_mutex_);
    workers.swap(workers_);
  }
  for (auto& w : workers)
    if (w.joinable()) w.join();
  store_.flush();
}

std::size_t replay_capture(std::istream& capture, const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0) {
    throw std::runtime_error("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  Fd fd(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (fd.get() < 0) {
    ::freeaddrinfo(res);
    throw_errno("socket");
  }
  const int rc = ::connect(fd.get(), res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc < 0) throw_errno("connect");

  std::string chunk;
  std::string line;
  std::size_t sent = 0;
  auto send_all = [&](const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd.get(), data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw_errno("send");
      }
      off += static_cast<std::size_t>(n);
    }
  };
  while (std::getline(capture, line)) {
    if (line.empty()) continue;
    chunk += line;
    chunk += '\n';
    ++sent;
    if (chunk.size() >= 32 * 1024) {
      send_all(chunk);
      chunk.clear();
    }
  }
  if (!chunk.empty()) send_all(chunk);
  ::shutdown(fd.get(), SHUT_WR);
  // Wait for the server to close its side so every line has been consumed.
  char sink[256];
  while (::recv(fd.get(), sink, sizeof(sink), 0) > 0) {
  }
  return sent;
}

}  // namespace arrayloc
