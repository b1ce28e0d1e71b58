#include <algorithm>

#include <json.hpp>

#include "reefloop/bridge.hpp"

namespace reefloop::bridge {

using json = nlohmann::ordered_json;

namespace {

json parse_line(const std::string& line) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string())
    throw BridgeError(ErrorKind::MalformedReply, "malformed reply: " + line.substr(0, 200));
  if (j["type"] == "err") {
    const std::string msg = j.contains("msg") && j["msg"].is_string() ? j["msg"].get<std::string>() : "";
    throw BridgeError(ErrorKind::PeerError, "tracker reported an error: " + msg);
  }
  return j;
}

double number(const json& j, const char* key, const std::string& line) {
  if (!j.contains(key) || !j[key].is_number())
    throw BridgeError(ErrorKind::MalformedReply,
                      std::string("reply lacks numeric \"") + key + "\": " + line.substr(0, 200));
  return j[key].get<double>();
}

}  // namespace

std::string_view error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConnectionRefused: return "connection_refused";
    case ErrorKind::VersionMismatch: return "version_mismatch";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::MalformedReply: return "malformed_reply";
    case ErrorKind::Disconnected: return "disconnected";
    case ErrorKind::PeerError: return "peer_error";
  }
  return "?";
}

std::string hello_message(int version) { return json{{"type", "hello"}, {"version", version}}.dump(); }

std::string init_message(const std::string& frame_ref, const BBox& box) {
  return json{{"type", "init"}, {"frame", frame_ref}, {"bbox", {box.x, box.y, box.w, box.h}}}.dump();
}

std::string frame_message(const std::string& frame_ref) {
  return json{{"type", "frame"}, {"frame", frame_ref}}.dump();
}

std::string bye_message() { return json{{"type", "bye"}}.dump(); }

Hello parse_hello(const std::string& line) {
  const json j = parse_line(line);
  if (j["type"] != "hello") throw BridgeError(ErrorKind::MalformedReply, "expected hello, got: " + line);
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw BridgeError(ErrorKind::MalformedReply, "hello lacks an integer version");
  Hello h;
  h.version = j["version"].get<int>();
  h.name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>() : "bridge";
  const std::string frames = j.contains("frames") && j["frames"].is_string() ? j["frames"].get<std::string>() : "path";
  if (frames == "path") h.frames = FrameMode::Path;
  else if (frames == "inline") h.frames = FrameMode::Inline;
  else throw BridgeError(ErrorKind::MalformedReply, "unknown frame mode '" + frames + "'");
  return h;
}

void parse_ack(const std::string& line) {
  const json j = parse_line(line);
  if (j["type"] != "ok") throw BridgeError(ErrorKind::MalformedReply, "expected ok, got: " + line.substr(0, 200));
}

tracking::TrackerOutput parse_bbox(const std::string& line) {
  const json j = parse_line(line);
  if (j["type"] != "bbox") throw BridgeError(ErrorKind::MalformedReply, "expected bbox, got: " + line.substr(0, 200));
  tracking::TrackerOutput out;
  out.box = {number(j, "x", line), number(j, "y", line), number(j, "w", line), number(j, "h", line)};
  out.confidence = std::clamp(number(j, "score", line), 0.0, 1.0);
  out.status = tracking::TrackStatus::Tracking;
  return out;
}

}  // namespace reefloop::bridge
