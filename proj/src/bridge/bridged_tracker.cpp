#include <cstdlib>
#include <system_error>

#include "reefloop/bridge.hpp"
#include "reefloop/text.hpp"

namespace reefloop::bridge {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

Endpoint parse_endpoint(const std::string& spec) {
  Endpoint ep;
  if (spec.rfind("stdio:", 0) == 0) {
    ep.kind = Endpoint::Kind::Stdio;
    ep.command = spec.substr(6);
    if (ep.command.empty()) throw BridgeError(ErrorKind::ConnectionRefused, "stdio endpoint needs a command");
    return ep;
  }
  if (spec.rfind("tcp:", 0) == 0) {
    const std::string rest = spec.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0)
      throw BridgeError(ErrorKind::ConnectionRefused, "tcp endpoint must be tcp:<host>:<port>");
    ep.kind = Endpoint::Kind::Tcp;
    ep.host = rest.substr(0, colon);
    const auto port = text::parse_double(rest.substr(colon + 1));
    if (!port || *port < 1 || *port > 65535 || *port != static_cast<int>(*port))
      throw BridgeError(ErrorKind::ConnectionRefused, "bad port in '" + spec + "'");
    ep.port = static_cast<int>(*port);
    return ep;
  }
  throw BridgeError(ErrorKind::ConnectionRefused, "endpoint must start with stdio: or tcp: ('" + spec + "')");
}

namespace {

std::unique_ptr<Transport> open(const Endpoint& ep) {
  if (ep.kind == Endpoint::Kind::Stdio) return spawn_stdio(ep.command, ep.env);
  return connect_tcp(ep.host, ep.port, std::chrono::milliseconds(ep.timeout_ms));
}

}  // namespace

BridgedTracker::BridgedTracker(const Endpoint& ep)
    : BridgedTracker(open(ep), ep.timeout_ms, ep.version) {}

BridgedTracker::BridgedTracker(std::unique_ptr<Transport> transport, int timeout_ms, int version)
    : io_(std::move(transport)), timeout_(timeout_ms) {
  try {
    handshake(version);
  } catch (...) {
    io_->close();
    throw;
  }
}

BridgedTracker::~BridgedTracker() {
  try {
    close();
  } catch (...) {
  }
  if (!scratch_.empty()) {
    std::error_code ec;
    fs::remove_all(scratch_, ec);
  }
}

void BridgedTracker::handshake(int version) {
  io_->send_line(hello_message(version));
  std::string line;
  try {
    line = io_->read_line(timeout_);
  } catch (const BridgeError& e) {
    if (e.kind() == ErrorKind::Disconnected)
      throw BridgeError(ErrorKind::ConnectionRefused, "peer went away during the handshake");
    throw BridgeError(e.kind(), std::string("handshake: ") + e.what());
  }
  try {
    hello_ = parse_hello(line);
  } catch (const BridgeError& e) {
    // a peer refusing our version usually answers with err
    if (e.kind() == ErrorKind::PeerError) throw BridgeError(ErrorKind::VersionMismatch, e.what());
    throw;
  }
  if (hello_.version != version)
    throw BridgeError(ErrorKind::VersionMismatch, "protocol version mismatch: we speak " + std::to_string(version) +
                                                      ", peer speaks " + std::to_string(hello_.version));
}

std::string BridgedTracker::frame_ref(const Frame& frame) {
  if (hello_.frames == FrameMode::Inline) return text::base64_encode(encode_png(frame));
  if (scratch_.empty()) {
    std::string tmpl = (fs::temp_directory_path() / "reefloop-bridge-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw BridgeError(ErrorKind::Disconnected, "cannot create a scratch directory");
    scratch_ = tmpl;
  }
  char name[32];
  std::snprintf(name, sizeof name, "%08zu.png", frame_counter_++);
  const fs::path file = scratch_ / name;
  write_png(file, frame);
  if (last_frame_) {
    std::error_code ec;
    fs::remove(*last_frame_, ec);
  }
  last_frame_ = file;
  return fs::absolute(file).string();
}

std::string BridgedTracker::exchange(const std::string& request, double* latency_ms) {
  if (failed_ || closed_) throw BridgeError(ErrorKind::Disconnected, "bridge session already ended");
  try {
    const auto start = Clock::now();
    io_->send_line(request);
    std::string reply = io_->read_line(timeout_);
    if (latency_ms) *latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    return reply;
  } catch (...) {
    failed_ = true;
    throw;
  }
}

void BridgedTracker::init(const Frame& frame, const BBox& box) {
  const std::string ref = frame_ref(frame);
  const std::string reply = exchange(init_message(ref, box), nullptr);
  try {
    parse_ack(reply);
  } catch (...) {
    failed_ = true;
    throw;
  }
}

tracking::TrackerOutput BridgedTracker::track(const Frame& frame) {
  const std::string ref = frame_ref(frame);
  double latency = 0.0;
  const std::string reply = exchange(frame_message(ref), &latency);
  try {
    auto out = parse_bbox(reply);
    out.latency_ms = latency;
    return out;
  } catch (...) {
    failed_ = true;
    throw;
  }
}

void BridgedTracker::close() {
  if (closed_) return;
  closed_ = true;
  if (!failed_) {
    try {
      io_->send_line(bye_message());
    } catch (...) {
    }
  }
  io_->close();
}

}  // namespace reefloop::bridge
