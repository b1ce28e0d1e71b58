#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/resource.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "reefloop/image.hpp"
#include "reefloop/session.hpp"
#include "reefloop/text.hpp"

namespace reefloop::session {

using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

namespace {

std::optional<double> number(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) return std::nullopt;
  return j[key].get<double>();
}

std::optional<BBox> box_field(const json& j) {
  if (!j.contains("box")) return std::nullopt;
  const auto& b = j["box"];
  if (!b.is_array() || b.size() != 4) return std::nullopt;
  for (const auto& v : b)
    if (!v.is_number()) return std::nullopt;
  return BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
}

// Console I/O runs below the control loop so encoding never delays a tick on
// a single-core vehicle computer. Linux applies nice per thread.
void lower_priority() { ::setpriority(PRIO_PROCESS, static_cast<id_t>(::gettid()), 10); }

bool send_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

std::optional<OperatorEvent> parse_operator_message(const std::string& line, std::string* error) {
  auto fail = [&](const std::string& why) -> std::optional<OperatorEvent> {
    if (error) *error = why;
    return std::nullopt;
  };
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    return fail("not json");
  }
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) return fail("missing type");
  const std::string type = j["type"].get<std::string>();
  OperatorEvent e;
  if (type == "init_box") {
    e.kind = OperatorEvent::Kind::InitBox;
    e.box = box_field(j);
    if (!e.box) return fail("init_box needs box [x,y,w,h]");
    if (!e.box->valid()) return fail("init_box needs positive width and height");
  } else if (type == "override") {
    e.kind = OperatorEvent::Kind::Override;
    const auto surge = number(j, "surge"), sway = number(j, "sway"), heave = number(j, "heave"),
               yaw = number(j, "yaw");
    if (!surge || !sway || !heave || !yaw) return fail("override needs surge, sway, heave and yaw");
    e.command = {*surge, *sway, *heave, *yaw};
  } else if (type == "release") {
    e.kind = OperatorEvent::Kind::Release;
  } else if (type == "reinit") {
    e.kind = OperatorEvent::Kind::Reinit;
    if (j.contains("box")) {
      e.box = box_field(j);
      if (!e.box || !e.box->valid()) return fail("reinit box must be [x,y,w,h] with positive size");
    }
  } else {
    return fail("unknown message type '" + type + "'");
  }
  return e;
}

std::string telemetry_message(const TickRecord& r) {
  json j;
  j["type"] = "telemetry";
  j["t"] = r.t;
  j["depth"] = r.sensors.depth;
  j["altitude"] = r.sensors.dvl_altitude;
  j["heading"] = r.sensors.compass_heading;
  j["mode"] = servo::mode_name(r.mode);
  j["command"] = {r.command.surge, r.command.sway, r.command.heave, r.command.yaw};
  return j.dump();
}

// ---- server -----------------------------------------------------------------

struct OperatorServer::Impl {
  struct Conn {
    int fd = -1;
    std::atomic<bool> alive{true};
    ~Conn() {
      if (fd >= 0) ::close(fd);
    }
    void kill() {
      alive = false;
      ::shutdown(fd, SHUT_RDWR);
    }
  };
  struct Pending {
    Clock::time_point due;
    OperatorEvent event;
  };
  struct FrameSlot {
    Frame frame;
    std::optional<BBox> box;
    servo::Mode mode = servo::Mode::Manual;
    double confidence = 0.0;
    std::size_t seq = 0;
  };

  ServeOptions opt;
  int listener = -1;
  int port = 0;
  std::atomic<bool> stopping{false};

  mutable std::mutex mu;
  std::condition_variable wake;
  std::shared_ptr<Conn> conn;
  std::deque<Pending> inbox;
  std::deque<std::string> outbox;
  std::optional<FrameSlot> mailbox;
  bool override_held = false;
  ServeStats stats;

  std::thread acceptor;
  std::thread reader;
  std::thread writer;

  void drop_connection(const std::shared_ptr<Conn>& c) {
    std::lock_guard lock(mu);
    c->kill();
    if (conn == c) {
      conn.reset();
      outbox.clear();
      // a console that vanishes mid-override must not leave the thrusters held
      if (override_held) {
        inbox.push_back({Clock::now(), {OperatorEvent::Kind::Override, std::nullopt, {}}});
        override_held = false;
      }
    }
  }

  void read_loop(std::shared_ptr<Conn> c) {
    lower_priority();
    std::string buf;
    char chunk[4096];
    while (!stopping && c->alive) {
      pollfd p{c->fd, POLLIN, 0};
      const int rc = ::poll(&p, 1, 100);
      if (rc < 0 && errno == EINTR) continue;
      if (rc < 0) break;
      if (rc == 0) continue;
      const ssize_t n = ::recv(c->fd, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      for (std::size_t nl; (nl = buf.find('\n')) != std::string::npos;) {
        std::string line = buf.substr(0, nl);
        buf.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string why;
        const auto e = parse_operator_message(line, &why);
        std::lock_guard lock(mu);
        if (!e) {
          ++stats.rejected_messages;
          outbox.push_back(json{{"type", "reject"}, {"reason", why}}.dump());
          wake.notify_all();
          continue;
        }
        if (e->kind == OperatorEvent::Kind::Override) override_held = true;
        if (e->kind == OperatorEvent::Kind::Release || e->kind == OperatorEvent::Kind::InitBox ||
            e->kind == OperatorEvent::Kind::Reinit)
          override_held = false;
        inbox.push_back({Clock::now() + std::chrono::milliseconds(opt.operator_delay_ms), *e});
      }
    }
    drop_connection(c);
  }

  void accept_loop() {
    lower_priority();
    while (!stopping) {
      pollfd p{listener, POLLIN, 0};
      const int rc = ::poll(&p, 1, 100);
      if (rc <= 0) continue;
      const int fd = ::accept4(listener, nullptr, nullptr, SOCK_CLOEXEC);
      if (fd < 0) continue;
      std::unique_lock lock(mu);
      if (conn) {
        ++stats.rejected_connections;
        lock.unlock();
        send_all(fd, json{{"type", "error"}, {"reason", "another operator console is already connected"}}.dump() +
                         "\n");
        ::shutdown(fd, SHUT_RDWR);
        ::close(fd);
        continue;
      }
      if (opt.send_buffer_bytes > 0)
        ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &opt.send_buffer_bytes, sizeof opt.send_buffer_bytes);
      auto c = std::make_shared<Conn>();
      c->fd = fd;
      conn = c;
      outbox.clear();
      lock.unlock();
      if (reader.joinable()) reader.join();
      reader = std::thread([this, c] { read_loop(c); });
      wake.notify_all();
    }
  }

  void write_loop() {
    lower_priority();
    const auto frame_gap = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(opt.max_frame_hz > 0 ? 1.0 / opt.max_frame_hz : 0.0));
    Clock::time_point next_frame = Clock::now();
    while (!stopping) {
      std::unique_lock lock(mu);
      std::string line;
      std::optional<FrameSlot> frame;
      wake.wait_until(lock, Clock::now() + std::chrono::milliseconds(50), [&] {
        return stopping || (conn && (!outbox.empty() || (mailbox && Clock::now() >= next_frame)));
      });
      if (stopping) break;
      if (!conn) continue;
      auto c = conn;
      if (!outbox.empty()) {
        line = std::move(outbox.front());
        outbox.pop_front();
      } else if (mailbox && Clock::now() >= next_frame) {
        frame = std::move(mailbox);
        mailbox.reset();
        next_frame = Clock::now() + frame_gap;
      } else {
        continue;
      }
      lock.unlock();

      if (frame) {
        json j;
        j["type"] = "frame";
        j["seq"] = frame->seq;
        j["png_b64"] = text::base64_encode(encode_png(frame->frame));
        j["box"] = frame->box ? json{frame->box->x, frame->box->y, frame->box->w, frame->box->h} : json(nullptr);
        j["mode"] = servo::mode_name(frame->mode);
        j["confidence"] = frame->confidence;
        line = j.dump();
      }
      if (!send_all(c->fd, line + "\n")) {
        drop_connection(c);
        continue;
      }
      if (frame) {
        std::lock_guard g(mu);
        ++stats.frames_sent;
      }
    }
  }
};

OperatorServer::OperatorServer(ServeOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->opt = options;
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE | AI_NUMERICSERV;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(options.host.c_str(), std::to_string(options.port).c_str(), &hints, &res); rc != 0)
    throw SessionError("cannot resolve '" + options.host + "': " + gai_strerror(rc));
  std::string why = "no usable address";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 4) == 0) {
      impl_->listener = fd;
      break;
    }
    why = errno == EADDRINUSE ? "port busy" : std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (impl_->listener < 0)
    throw SessionError("cannot listen on " + options.host + ":" + std::to_string(options.port) + ": " + why);
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(impl_->listener, reinterpret_cast<sockaddr*>(&addr), &len);
  impl_->port = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                           : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  impl_->acceptor = std::thread([this] { impl_->accept_loop(); });
  impl_->writer = std::thread([this] { impl_->write_loop(); });
}

OperatorServer::~OperatorServer() { stop(); }

int OperatorServer::port() const { return impl_->port; }
const ServeOptions& OperatorServer::options() const { return impl_->opt; }

bool OperatorServer::connected() const {
  std::lock_guard lock(impl_->mu);
  return impl_->conn != nullptr;
}

std::vector<OperatorEvent> OperatorServer::drain() {
  std::lock_guard lock(impl_->mu);
  std::vector<OperatorEvent> out;
  const auto now = Clock::now();
  while (!impl_->inbox.empty() && impl_->inbox.front().due <= now) {
    out.push_back(impl_->inbox.front().event);
    impl_->inbox.pop_front();
  }
  return out;
}

void OperatorServer::publish(const TickRecord& r, const Frame& frame) {
  std::string line = telemetry_message(r);
  std::lock_guard lock(impl_->mu);
  ++impl_->stats.ticks;
  if (impl_->conn) {
    if (impl_->outbox.size() >= impl_->opt.telemetry_queue) {
      impl_->outbox.pop_front();
      ++impl_->stats.telemetry_dropped;
    }
    impl_->outbox.push_back(std::move(line));
  }
  if (impl_->mailbox && impl_->conn) ++impl_->stats.frames_dropped;
  impl_->mailbox = Impl::FrameSlot{frame, r.tracker.box, r.mode, r.tracker.confidence, r.index};
  impl_->wake.notify_all();
}

void OperatorServer::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  {
    std::lock_guard lock(impl_->mu);
    if (impl_->conn) impl_->conn->kill();
  }
  impl_->wake.notify_all();
  if (impl_->acceptor.joinable()) impl_->acceptor.join();
  if (impl_->writer.joinable()) impl_->writer.join();
  if (impl_->reader.joinable()) impl_->reader.join();
  if (impl_->listener >= 0) ::close(impl_->listener);
  impl_->listener = -1;
}

ServeStats OperatorServer::stats() const {
  std::lock_guard lock(impl_->mu);
  return impl_->stats;
}

EpisodeLog serve_episode(const sim::Scenario& scenario, const EpisodeOptions& options, OperatorServer& server,
                         const std::function<bool()>& stop, ServeStats* stats) {
  EpisodeRunner runner(scenario, options);
  const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(runner.dt()));
  const auto start = Clock::now();
  std::optional<Clock::time_point> last;
  double max_gap = 0.0, min_gap = 0.0;
  for (std::size_t k = 0; !runner.done(); ++k) {
    if (stop && stop()) break;
    if (server.options().wall_clock) std::this_thread::sleep_until(start + period * static_cast<long>(k));
    const auto now = Clock::now();
    if (last) {
      const double gap = std::chrono::duration<double>(now - *last).count();
      max_gap = k == 1 ? gap : std::max(max_gap, gap);
      min_gap = k == 1 ? gap : std::min(min_gap, gap);
    }
    last = now;
    const auto events = server.drain();
    const auto& rec = runner.tick([&](const OperatorView&) { return events; });
    server.publish(rec, runner.frame());
  }
  if (stats) {
    *stats = server.stats();
    stats->max_tick_interval_s = max_gap;
    stats->min_tick_interval_s = min_gap;
  }
  return runner.finish();
}

}  // namespace reefloop::session
