#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fstream>
#include <numeric>
#include <thread>

#include "../support/peer.hpp"
#include "../support/scenes.hpp"
#include "reefloop/bridge.hpp"
#include "reefloop/metrics.hpp"

using namespace reefloop;
using namespace reefloop::bridge;

namespace {

const std::string kPeer = REEFLOOP_PEER_PATH;
const std::string kAdapter = REEFLOOP_ADAPTER_PATH;

Endpoint peer(const std::string& args = "", int timeout_ms = 3000) {
  Endpoint ep;
  ep.command = kPeer + " " + args;
  ep.timeout_ms = timeout_ms;
  return ep;
}

Frame frame(int k = 0) { return testing::textured_background(64, 48, 5, 0.1 * k); }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const BridgeError& e) {
    return e.kind();
  }
  FAIL("expected a BridgeError");
  return ErrorKind::PeerError;
}

// One-shot TCP listener on an ephemeral port serving the test peer.
struct TcpPeer {
  int listener = -1;
  int port = 0;
  std::thread worker;

  explicit TcpPeer(testing::PeerOptions opt) {
    listener = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    ::listen(listener, 1);
    socklen_t len = sizeof addr;
    ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
    port = ntohs(addr.sin_port);
    worker = std::thread([this, opt] {
      const int fd = ::accept(listener, nullptr, nullptr);
      if (fd < 0) return;
      std::FILE* in = ::fdopen(::dup(fd), "r");
      std::FILE* out = ::fdopen(fd, "w");
      testing::serve_peer(in, out, opt);
      std::fclose(in);
      std::fclose(out);
    });
  }
  ~TcpPeer() {
    worker.join();
    ::close(listener);
  }
};

}  // namespace

TEST_CASE("requests are bit-exact") {
  CHECK(hello_message() == R"({"type":"hello","version":1})");
  CHECK(init_message("/tmp/a.png", {1, 2, 3.5, 4}) == R"({"type":"init","frame":"/tmp/a.png","bbox":[1.0,2.0,3.5,4.0]})");
  CHECK(frame_message("abc") == R"({"type":"frame","frame":"abc"})");
  CHECK(bye_message() == R"({"type":"bye"})");
}

TEST_CASE("reply parsing") {
  const auto out = parse_bbox(R"({"type":"bbox","x":10,"y":20,"w":30,"h":40,"score":0.9})");
  CHECK(out.box == BBox{10, 20, 30, 40});
  CHECK(out.confidence == 0.9);
  CHECK(parse_bbox(R"({"type":"bbox","x":0,"y":0,"w":1,"h":1,"score":7})").confidence == 1.0);

  CHECK(kind_of([] { parse_bbox(R"({"type":"bbox","x":10,"y":20,"h":40,"score":0.9})"); }) ==
        ErrorKind::MalformedReply);
  CHECK(kind_of([] { parse_bbox(R"({"type":"bbox","x":"10","y":20,"w":1,"h":40,"score":0.9})"); }) ==
        ErrorKind::MalformedReply);
  CHECK(kind_of([] { parse_bbox("not json"); }) == ErrorKind::MalformedReply);
  CHECK(kind_of([] { parse_bbox(R"({"type":"ok"})"); }) == ErrorKind::MalformedReply);
  CHECK(kind_of([] { parse_bbox(R"({"type":"err","msg":"boom"})"); }) == ErrorKind::PeerError);
  CHECK_NOTHROW(parse_ack(R"({"type":"ok"})"));
  CHECK(kind_of([] { parse_ack(R"({"type":"err","msg":"no"})"); }) == ErrorKind::PeerError);

  const auto h = parse_hello(R"({"type":"hello","version":1,"name":"keeptrack","frames":"inline"})");
  CHECK(h.version == 1);
  CHECK(h.name == "keeptrack");
  CHECK(h.frames == FrameMode::Inline);
  CHECK(kind_of([] { parse_hello(R"({"type":"hello","version":1,"frames":"carrier-pigeon"})"); }) ==
        ErrorKind::MalformedReply);
}

TEST_CASE("endpoint specs") {
  const auto s = parse_endpoint("stdio:python3 adapter.py --x");
  CHECK(s.kind == Endpoint::Kind::Stdio);
  CHECK(s.command == "python3 adapter.py --x");
  const auto t = parse_endpoint("tcp:jetson.local:7000");
  CHECK(t.kind == Endpoint::Kind::Tcp);
  CHECK(t.host == "jetson.local");
  CHECK(t.port == 7000);
  CHECK_THROWS_AS(parse_endpoint("tcp:host"), BridgeError);
  CHECK_THROWS_AS(parse_endpoint("tcp:host:99999"), BridgeError);
  CHECK_THROWS_AS(parse_endpoint("udp:host:1"), BridgeError);
}

TEST_CASE("echo peer over stdio returns the init box") {
  for (const char* mode : {"path", "inline"}) {
    BridgedTracker t(peer(std::string("--frames ") + mode));
    CHECK(t.name() == "echo");
    const BBox box{5, 6, 20, 10};
    t.init(frame(), box);
    for (int k = 1; k <= 10; ++k) {
      const auto out = t.track(frame(k));
      CHECK(out.box == box);
      CHECK(out.confidence == 0.9);
      CHECK(out.latency_ms > 0.0);
    }
    t.close();
    CHECK_FALSE(t.failed());
  }
}

TEST_CASE("echo peer over tcp") {
  TcpPeer server({});
  Endpoint ep;
  ep.kind = Endpoint::Kind::Tcp;
  ep.host = "127.0.0.1";
  ep.port = server.port;
  ep.timeout_ms = 3000;
  BridgedTracker t(ep);
  t.init(frame(), {1, 1, 8, 8});
  CHECK(t.track(frame(1)).box == BBox{1, 1, 8, 8});
  t.close();
}

TEST_CASE("version mismatch") {
  Endpoint ep = peer();
  ep.version = 2;
  CHECK(kind_of([&] { BridgedTracker t(ep); }) == ErrorKind::VersionMismatch);
  CHECK(kind_of([&] { BridgedTracker t(peer("--version 3")); }) == ErrorKind::VersionMismatch);
}

TEST_CASE("a slow reply times out and ends the session") {
  BridgedTracker t(peer("--delay-ms 400", 100));
  t.init(frame(), {1, 1, 8, 8});
  CHECK(kind_of([&] { t.track(frame(1)); }) == ErrorKind::Timeout);
  CHECK(t.failed());
  // the late reply must not be taken as the answer to a later request
  CHECK(kind_of([&] { t.track(frame(2)); }) == ErrorKind::Disconnected);
}

TEST_CASE("malformed replies fail the session") {
  BridgedTracker t(peer("--malformed"));
  t.init(frame(), {1, 1, 8, 8});
  CHECK(kind_of([&] { t.track(frame(1)); }) == ErrorKind::MalformedReply);
  CHECK(t.failed());
}

TEST_CASE("mid-stream disconnect") {
  BridgedTracker t(peer("--disconnect-after 3"));
  t.init(frame(), {1, 1, 8, 8});
  for (int k = 1; k <= 3; ++k) CHECK_NOTHROW(t.track(frame(k)));
  CHECK(kind_of([&] { t.track(frame(4)); }) == ErrorKind::Disconnected);
  CHECK(t.failed());
}

TEST_CASE("unreachable peers") {
  Endpoint dead;
  dead.command = "exit 0";
  dead.timeout_ms = 2000;
  CHECK(kind_of([&] { BridgedTracker t(dead); }) == ErrorKind::ConnectionRefused);
  dead.command = "/nonexistent/tracker-binary 2>/dev/null";
  CHECK(kind_of([&] { BridgedTracker t(dead); }) == ErrorKind::ConnectionRefused);

  // grab a free port, then close it so nothing listens there
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  ::close(fd);
  Endpoint tcp;
  tcp.kind = Endpoint::Kind::Tcp;
  tcp.host = "127.0.0.1";
  tcp.port = ntohs(addr.sin_port);
  CHECK(kind_of([&] { BridgedTracker t(tcp); }) == ErrorKind::ConnectionRefused);
}

TEST_CASE("init errors from the peer surface as peer errors") {
  TcpPeer server({});
  auto io = connect_tcp("127.0.0.1", server.port, std::chrono::milliseconds(2000));
  // hand-driven session: init names a frame path that does not exist
  io->send_line(hello_message());
  CHECK(parse_hello(io->read_line(std::chrono::milliseconds(2000))).version == 1);
  io->send_line(init_message("/definitely/not/here.png", {0, 0, 4, 4}));
  CHECK(kind_of([&] { parse_ack(io->read_line(std::chrono::milliseconds(2000))); }) == ErrorKind::PeerError);
  io->send_line(bye_message());
  io->close();
}

TEST_CASE("jittered peers are reproducible per run index") {
  auto run = [](int index) {
    Endpoint ep = peer("--jitter 3 --seed 10");
    ep.env = {"REEFLOOP_RUN_INDEX=" + std::to_string(index)};
    BridgedTracker t(ep);
    t.init(frame(), {20, 20, 10, 10});
    std::vector<BBox> boxes;
    for (int k = 1; k <= 20; ++k) boxes.push_back(t.track(frame(k)).box);
    return boxes;
  };
  CHECK(run(0) == run(0));
  CHECK(run(0) != run(1));
}

TEST_CASE("reference adapter: client latency matches the adapter's own timing") {
  const auto log = std::filesystem::temp_directory_path() / ("reefloop-timing-" + std::to_string(::getpid()));
  Endpoint ep;
  ep.command = "python3 " + kAdapter + " --work-ms 20 --timing-log " + log.string();
  ep.timeout_ms = 5000;
  std::vector<double> latencies;
  {
    BridgedTracker t(ep);
    CHECK(t.name() == "reference-adapter");
    t.init(frame(), {10, 10, 12, 12});
    for (int k = 1; k <= 50; ++k) {
      const auto out = t.track(frame(k));
      CHECK(out.box == BBox{10, 10, 12, 12});
      latencies.push_back(out.latency_ms);
    }
    t.close();
  }
  std::ifstream in(log);
  std::vector<double> self;
  for (double v; in >> v;) self.push_back(v);
  std::filesystem::remove(log);
  REQUIRE(self.size() == 50);
  REQUIRE(latencies.size() == 50);
  const double adapter_mean = std::accumulate(self.begin(), self.end(), 0.0) / 50;
  metrics::TrackRun run;
  run.latencies_ms = latencies;
  const auto stats = metrics::fps_stats(run);
  CHECK(std::abs(stats.mean_latency_ms - adapter_mean) < 0.05 * adapter_mean);
}
