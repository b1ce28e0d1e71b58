#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "reefloop/tracker.hpp"

// Newline-delimited JSON protocol for trackers living in another process.
//
//   -> {"type":"hello","version":1}
//   <- {"type":"hello","version":1,"name":"...","frames":"path|inline"}
//   -> {"type":"init","frame":"<path|b64>","bbox":[x,y,w,h]}
//   <- {"type":"ok"} | {"type":"err","msg":"..."}
//   -> {"type":"frame","frame":"<path|b64>"}
//   <- {"type":"bbox","x":..,"y":..,"w":..,"h":..,"score":..}
//   -> {"type":"bye"}

namespace reefloop::bridge {

inline constexpr int kProtocolVersion = 1;

enum class ErrorKind { ConnectionRefused, VersionMismatch, Timeout, MalformedReply, Disconnected, PeerError };
std::string_view error_kind_name(ErrorKind k);

class BridgeError : public tracking::TrackerError {
 public:
  BridgeError(ErrorKind kind, const std::string& what) : TrackerError(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

enum class FrameMode { Path, Inline };

struct Hello {
  int version = 0;
  std::string name;
  FrameMode frames = FrameMode::Path;
};

// Message builders and parsers. Parsers throw BridgeError(MalformedReply) on
// anything that does not match the schema and BridgeError(PeerError) on err.
std::string hello_message(int version = kProtocolVersion);
std::string init_message(const std::string& frame_ref, const BBox& box);
std::string frame_message(const std::string& frame_ref);
std::string bye_message();
Hello parse_hello(const std::string& line);
void parse_ack(const std::string& line);
tracking::TrackerOutput parse_bbox(const std::string& line);

/// Line-oriented duplex byte stream with deadlines.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send_line(const std::string& line) = 0;
  /// Throws BridgeError(Timeout) when no full line arrives in time and
  /// BridgeError(Disconnected) on end of stream.
  virtual std::string read_line(std::chrono::milliseconds timeout) = 0;
  virtual void close() = 0;
};

/// Runs `command` under /bin/sh with its stdin/stdout as the channel.
/// `env` entries ("KEY=value") are added to the child's environment.
std::unique_ptr<Transport> spawn_stdio(const std::string& command, const std::vector<std::string>& env = {});
std::unique_ptr<Transport> connect_tcp(const std::string& host, int port, std::chrono::milliseconds timeout);

struct Endpoint {
  enum class Kind { Stdio, Tcp } kind = Kind::Stdio;
  std::string command;  ///< stdio
  std::string host;     ///< tcp
  int port = 0;
  int timeout_ms = 5000;
  int version = kProtocolVersion;
  std::vector<std::string> env;
};

/// "stdio:<command>" or "tcp:<host>:<port>".
Endpoint parse_endpoint(const std::string& spec);

/// Tracker contract served by a remote peer. Any error leaves the session
/// failed; later calls throw BridgeError(Disconnected).
class BridgedTracker final : public tracking::Tracker {
 public:
  /// Opens the transport and performs the handshake.
  explicit BridgedTracker(const Endpoint& endpoint);
  /// Handshake over an already open transport.
  BridgedTracker(std::unique_ptr<Transport> transport, int timeout_ms, int version = kProtocolVersion);
  ~BridgedTracker() override;

  std::string name() const override { return hello_.name; }
  void init(const Frame& frame, const BBox& box) override;
  tracking::TrackerOutput track(const Frame& frame) override;

  const Hello& hello() const { return hello_; }
  bool failed() const { return failed_; }
  /// Sends bye and closes; idempotent.
  void close();

 private:
  void handshake(int version);
  std::string frame_ref(const Frame& frame);
  std::string exchange(const std::string& request, double* latency_ms);

  std::unique_ptr<Transport> io_;
  std::chrono::milliseconds timeout_;
  Hello hello_;
  bool failed_ = false;
  bool closed_ = false;
  std::filesystem::path scratch_;
  std::optional<std::filesystem::path> last_frame_;
  std::size_t frame_counter_ = 0;
};

}  // namespace reefloop::bridge
