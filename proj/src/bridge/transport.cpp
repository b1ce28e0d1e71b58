#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "reefloop/bridge.hpp"

extern char** environ;

namespace reefloop::bridge {

namespace {

using Clock = std::chrono::steady_clock;

void ignore_sigpipe() {
  static const bool once = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

// Buffered line reader/writer over a pair of file descriptors.
class FdChannel : public Transport {
 public:
  FdChannel(int in_fd, int out_fd) : in_(in_fd), out_(out_fd) {}

  void send_line(const std::string& line) override {
    if (out_ < 0) throw BridgeError(ErrorKind::Disconnected, "channel is closed");
    std::string buf = line + '\n';
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t n = ::write(out_, buf.data() + off, buf.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw BridgeError(ErrorKind::Disconnected, std::string("write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::milliseconds timeout) override {
    const auto deadline = Clock::now() + timeout;
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (in_ < 0 || eof_) throw BridgeError(ErrorKind::Disconnected, "peer closed the connection");
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (left.count() <= 0) throw BridgeError(ErrorKind::Timeout, "no reply within " + std::to_string(timeout.count()) + " ms");
      pollfd p{in_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0 && errno == EINTR) continue;
      if (r < 0) throw BridgeError(ErrorKind::Disconnected, std::string("poll failed: ") + std::strerror(errno));
      if (r == 0) continue;
      char chunk[65536];
      const ssize_t n = ::read(in_, chunk, sizeof chunk);
      if (n < 0 && (errno == EINTR || errno == EAGAIN)) continue;
      if (n <= 0) {
        eof_ = true;
        continue;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 protected:
  void close_fds() {
    if (out_ >= 0 && out_ != in_) ::close(out_);
    if (in_ >= 0) ::close(in_);
    in_ = out_ = -1;
  }

  int in_;
  int out_;
  std::string buffer_;
  bool eof_ = false;
};

class ChildProcess final : public FdChannel {
 public:
  ChildProcess(int in_fd, int out_fd, pid_t pid) : FdChannel(in_fd, out_fd), pid_(pid) {}
  ~ChildProcess() override { close(); }

  void close() override {
    if (out_ >= 0) {
      ::close(out_);  // EOF on the child's stdin
      out_ = -1;
    }
    if (pid_ > 0) {
      // give the peer a moment to exit on its own, then insist
      const auto deadline = Clock::now() + std::chrono::milliseconds(1000);
      int status = 0;
      while (::waitpid(pid_, &status, WNOHANG) == 0) {
        if (Clock::now() > deadline) {
          ::kill(pid_, SIGKILL);
          ::waitpid(pid_, &status, 0);
          break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
      }
      pid_ = -1;
    }
    close_fds();
  }

 private:
  pid_t pid_;
};

class Socket final : public FdChannel {
 public:
  explicit Socket(int fd) : FdChannel(fd, fd) {}
  ~Socket() override { close(); }
  void close() override {
    if (in_ >= 0) ::shutdown(in_, SHUT_RDWR);
    close_fds();
  }
};

}  // namespace

std::unique_ptr<Transport> spawn_stdio(const std::string& command, const std::vector<std::string>& env) {
  ignore_sigpipe();
  int to_child[2], from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw BridgeError(ErrorKind::ConnectionRefused, "pipe failed");
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw BridgeError(ErrorKind::ConnectionRefused, "pipe failed");
  }
  std::vector<std::string> env_store;
  for (char** e = environ; *e; ++e) env_store.emplace_back(*e);
  for (const auto& e : env) env_store.push_back(e);
  std::vector<char*> envp;
  for (auto& e : env_store) envp.push_back(e.data());
  envp.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) throw BridgeError(ErrorKind::ConnectionRefused, "fork failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
    ::execve("/bin/sh", const_cast<char* const*>(argv), envp.data());
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<ChildProcess>(from_child[0], to_child[1], pid);
}

std::unique_ptr<Transport> connect_tcp(const std::string& host, int port, std::chrono::milliseconds timeout) {
  ignore_sigpipe();
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0)
    throw BridgeError(ErrorKind::ConnectionRefused, "cannot resolve " + host + ": " + ::gai_strerror(rc));
  std::string last_error = "no address";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC | SOCK_NONBLOCK, ai->ai_protocol);
    if (fd < 0) continue;
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
      if (rc == 0) {
        ::close(fd);
        ::freeaddrinfo(res);
        throw BridgeError(ErrorKind::Timeout, "connect to " + host + ":" + std::to_string(port) + " timed out");
      }
      int err = 0;
      socklen_t len = sizeof err;
      ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
      rc = err == 0 ? 0 : -1;
      errno = err;
    }
    if (rc == 0) {
      ::freeaddrinfo(res);
      ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) & ~O_NONBLOCK);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return std::make_unique<Socket>(fd);
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  throw BridgeError(ErrorKind::ConnectionRefused, "cannot connect to " + host + ":" + std::to_string(port) + ": " + last_error);
}

}  // namespace reefloop::bridge
