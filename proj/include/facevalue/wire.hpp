#pragma once

// JSON text messages exchanged with a live client, schema version 1.
//
//   server -> client  {"v":1,"kind":"frame","episode":E,"tick":T,"pos":P,"grip":G|null,
//                      "object":{"id":I,"width":W}|null,"avail":["g0","up",...],
//                      "reward":R,"terminal":B,"latched":L}
//                     {"v":1,"kind":"error","message":"..."}
//   client -> server  {"v":1,"kind":"button"}
//                     {"v":1,"kind":"valence","value":V}          V in [-1, 1]
//                     {"v":1,"kind":"landmarks","points":[[x,y] x 68]}
//                     {"v":1,"kind":"start"}
//                     {"v":1,"kind":"config_patch","values":{"key":"value",...}}
//
// "object" is null when the object is hidden from the user.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "facevalue/errors.hpp"
#include "facevalue/face_pipeline.hpp"
#include "facevalue/gripworld.hpp"

namespace facevalue::wire {

inline constexpr int kVersion = 1;

struct OutFrame {
  std::size_t episode = 0;
  std::size_t tick = 0;
  int pos = 0;
  std::optional<std::size_t> grip;
  std::optional<ObjectSpec> object;
  std::vector<std::string> avail;
  double reward = 0.0;
  bool terminal = false;
  bool latched = false;
  friend bool operator==(const OutFrame&, const OutFrame&) = default;
};

struct InEvent {
  enum class Kind { button, valence, landmarks, start, config_patch };
  Kind kind = Kind::button;
  double value = 0.0;                         ///< valence
  LandmarkFrame points;                       ///< landmarks
  std::map<std::string, std::string> values;  ///< config_patch
  /// Server tick at which the event was received; stamped on receipt.
  std::optional<std::uint64_t> received_tick;
  friend bool operator==(const InEvent&, const InEvent&) = default;
};

inline const char* kind_name(InEvent::Kind k) {
  switch (k) {
    case InEvent::Kind::button:
      return "button";
    case InEvent::Kind::valence:
      return "valence";
    case InEvent::Kind::landmarks:
      return "landmarks";
    case InEvent::Kind::start:
      return "start";
    case InEvent::Kind::config_patch:
      break;
  }
  return "config_patch";
}

inline nlohmann::json points_json(const LandmarkFrame& f) {
  auto arr = nlohmann::json::array();
  for (const Point2& p : f.points) arr.push_back({p.x, p.y});
  return arr;
}

inline LandmarkFrame points_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw parse_error("landmarks: 'points' must be an array");
  if (j.size() != kLandmarkCount)
    throw parse_error("landmarks: expected 68 points, got " + std::to_string(j.size()));
  LandmarkFrame f;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const auto& p = j[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw parse_error("landmarks: point " + std::to_string(i) + " is not [x, y]");
    f.points[i] = {p[0].get<double>(), p[1].get<double>()};
  }
  return f;
}

inline nlohmann::json to_json(const OutFrame& f) {
  nlohmann::json j;
  j["v"] = kVersion;
  j["kind"] = "frame";
  j["episode"] = f.episode;
  j["tick"] = f.tick;
  j["pos"] = f.pos;
  j["grip"] = f.grip ? nlohmann::json(*f.grip) : nlohmann::json(nullptr);
  j["object"] = f.object ? nlohmann::json{{"id", f.object->id}, {"width", f.object->width}} : nlohmann::json(nullptr);
  j["avail"] = f.avail;
  j["reward"] = f.reward;
  j["terminal"] = f.terminal;
  j["latched"] = f.latched;
  return j;
}

inline std::string encode(const OutFrame& f) { return to_json(f).dump(); }

inline std::string encode_error(const std::string& message) {
  return nlohmann::json{{"v", kVersion}, {"kind", "error"}, {"message", message}}.dump();
}

inline nlohmann::json to_json(const InEvent& e) {
  nlohmann::json j;
  j["v"] = kVersion;
  j["kind"] = kind_name(e.kind);
  switch (e.kind) {
    case InEvent::Kind::valence:
      j["value"] = e.value;
      break;
    case InEvent::Kind::landmarks:
      j["points"] = points_json(e.points);
      break;
    case InEvent::Kind::config_patch:
      j["values"] = e.values;
      break;
    case InEvent::Kind::button:
    case InEvent::Kind::start:
      break;
  }
  if (e.received_tick) j["received_tick"] = *e.received_tick;
  return j;
}

inline std::string encode(const InEvent& e) { return to_json(e).dump(); }

namespace detail {

inline nlohmann::json parse_object(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw parse_error(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw parse_error("message must be a JSON object");
  if (!j.contains("v") || !j["v"].is_number_integer()) throw parse_error("message has no integer 'v'");
  if (j["v"].get<int>() != kVersion) throw parse_error("unsupported schema version " + j["v"].dump());
  if (!j.contains("kind") || !j["kind"].is_string()) throw parse_error("message has no string 'kind'");
  return j;
}

template <class T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw parse_error(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw parse_error(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline InEvent decode_event(const std::string& text) {
  const nlohmann::json j = detail::parse_object(text);
  const std::string kind = j["kind"].get<std::string>();
  InEvent e;
  if (kind == "button") {
    e.kind = InEvent::Kind::button;
  } else if (kind == "start") {
    e.kind = InEvent::Kind::start;
  } else if (kind == "valence") {
    e.kind = InEvent::Kind::valence;
    if (!j.contains("value") || !j["value"].is_number()) throw parse_error("valence: missing numeric 'value'");
    e.value = j["value"].get<double>();
    if (!(e.value >= -1.0 && e.value <= 1.0)) throw parse_error("valence: value outside [-1, 1]");
  } else if (kind == "landmarks") {
    e.kind = InEvent::Kind::landmarks;
    if (!j.contains("points")) throw parse_error("landmarks: missing 'points'");
    e.points = points_from_json(j["points"]);
  } else if (kind == "config_patch") {
    e.kind = InEvent::Kind::config_patch;
    if (!j.contains("values") || !j["values"].is_object()) throw parse_error("config_patch: 'values' must be an object");
    for (const auto& [k, v] : j["values"].items()) {
      if (v.is_string()) e.values[k] = v.get<std::string>();
      else if (v.is_number() || v.is_boolean()) e.values[k] = v.dump();
      else throw parse_error("config_patch: value of '" + k + "' must be a string, number or boolean");
    }
  } else {
    throw parse_error("unknown event kind '" + kind + "'");
  }
  if (j.contains("received_tick")) e.received_tick = detail::field<std::uint64_t>(j, "received_tick");
  return e;
}

inline OutFrame frame_from_json(const nlohmann::json& j) {
  if (!j.contains("kind") || j["kind"] != "frame") throw parse_error("expected a frame message");
  OutFrame f;
  f.episode = detail::field<std::size_t>(j, "episode");
  f.tick = detail::field<std::size_t>(j, "tick");
  f.pos = detail::field<int>(j, "pos");
  if (!j.contains("grip")) throw parse_error("missing field 'grip'");
  if (!j["grip"].is_null()) f.grip = detail::field<std::size_t>(j, "grip");
  if (!j.contains("object")) throw parse_error("missing field 'object'");
  if (!j["object"].is_null())
    f.object = ObjectSpec{detail::field<std::size_t>(j["object"], "id"), detail::field<int>(j["object"], "width")};
  f.avail = detail::field<std::vector<std::string>>(j, "avail");
  f.reward = detail::field<double>(j, "reward");
  f.terminal = detail::field<bool>(j, "terminal");
  f.latched = detail::field<bool>(j, "latched");
  return f;
}

inline OutFrame decode_frame(const std::string& text) { return frame_from_json(detail::parse_object(text)); }

}  // namespace facevalue::wire
