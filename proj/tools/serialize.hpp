#pragma once

// JSON forms of the calibration artifacts the CLI reads and writes. The
// session bundle has its own serializers in the core library; everything
// here is tool-side plumbing.

#include <array>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfk/calibration.hpp"
#include "mfk/errors.hpp"
#include "mfk/session.hpp"
#include "mfk/skeleton.hpp"
#include "mfk/types.hpp"

namespace mfk::tool {

using json = nlohmann::ordered_json;

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
inline json to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

inline Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::CorruptStream, "expected a 3-vector");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline json to_json(const Eigen::MatrixX3d& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  }
  return rows;
}

inline Eigen::MatrixX3d matrix_from(const json& j, Eigen::Index rows) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw Error(ErrorCode::CorruptStream, "bad matrix row count");
  }
  Eigen::MatrixX3d m(rows, 3);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vec3 v = vec3_from(j[static_cast<std::size_t>(r)]);
    m.row(r) = v.transpose();
  }
  return m;
}

template <std::size_t N>
json corners_to_json(const std::array<Vec3, N>& corners) {
  json a = json::array();
  for (const auto& c : corners) a.push_back(to_json(c));
  return a;
}

template <std::size_t N>
std::array<Vec3, N> corners_from(const json& j) {
  if (!j.is_array() || j.size() != N) {
    throw Error(ErrorCode::CorruptStream, "bad corner count");
  }
  std::array<Vec3, N> out;
  for (std::size_t i = 0; i < N; ++i) out[i] = vec3_from(j[i]);
  return out;
}

// --- body skeleton ---

inline json to_json(const BodySkeleton& skel) {
  json joints = json::array();
  for (const auto& joint : skel.joints) {
    joints.push_back(
        {{"name", joint.name}, {"parent", joint.parent}, {"offset", to_json(joint.offset)}});
  }
  json markers = json::array();
  for (const auto& marker : skel.markers) {
    markers.push_back({{"joint", marker.joint}, {"corners", corners_to_json(marker.corners)}});
  }
  return {{"schema_version", kSchemaVersion}, {"joints", joints}, {"markers", markers}};
}

inline BodySkeleton body_skeleton_from(const json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch, "body skeleton schema");
  }
  BodySkeleton skel;
  for (const auto& joint : j.at("joints")) {
    BodyJoint b;
    b.name = joint.at("name").get<std::string>();
    b.parent = joint.at("parent").get<int>();
    b.offset = vec3_from(joint.at("offset"));
    skel.joints.push_back(std::move(b));
  }
  for (const auto& marker : j.at("markers")) {
    BodyMarker m;
    m.joint = marker.at("joint").get<int>();
    m.corners = corners_from<4>(marker.at("corners"));
    skel.markers.push_back(std::move(m));
  }
  skel.validate();
  return skel;
}

// --- hand skeleton ---

inline json to_json(const HandSkeleton& skel) {
  json segments = json::array();
  for (const auto& seg : skel.segments) {
    segments.push_back({{"name", seg.name},
                        {"parent", seg.parent},
                        {"base_offset", to_json(seg.base_offset)}});
  }
  json scales = json::array();
  for (Eigen::Index i = 0; i < skel.scales.size(); ++i) scales.push_back(skel.scales[i]);
  json markers = json::array();
  for (const auto& m : skel.wrist_markers) markers.push_back(corners_to_json(m));
  return {{"schema_version", kSchemaVersion},
          {"segments", segments},
          {"scales", scales},
          {"offsets", to_json(skel.offsets)},
          {"wrist_markers", markers}};
}

inline HandSkeleton hand_skeleton_from(const json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch, "hand skeleton schema");
  }
  HandSkeleton skel;
  for (const auto& seg : j.at("segments")) {
    HandSegment s;
    s.name = seg.at("name").get<std::string>();
    s.parent = seg.at("parent").get<int>();
    s.base_offset = vec3_from(seg.at("base_offset"));
    skel.segments.push_back(std::move(s));
  }
  const auto& scales = j.at("scales");
  skel.scales.resize(static_cast<Eigen::Index>(scales.size()));
  for (std::size_t i = 0; i < scales.size(); ++i) {
    skel.scales[static_cast<Eigen::Index>(i)] = scales[i].get<double>();
  }
  skel.offsets = matrix_from(j.at("offsets"), skel.scales.size());
  const auto& markers = j.at("wrist_markers");
  if (markers.size() != 3) {
    throw Error(ErrorCode::CorruptStream, "expected 3 wrist marker squares");
  }
  for (std::size_t m = 0; m < 3; ++m) skel.wrist_markers[m] = corners_from<4>(markers[m]);
  skel.validate();
  return skel;
}

// --- calibration structure ---

inline json to_json(const CalibrationStructure& s) {
  json corners = json::array();
  json normals = json::array();
  for (const auto& c : s.corners) corners.push_back(to_json(c));
  for (const auto& n : s.normals) normals.push_back(to_json(n));
  return {{"schema_version", kSchemaVersion}, {"corners", corners}, {"normals", normals}};
}

inline CalibrationStructure structure_from(const json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch, "structure schema");
  }
  CalibrationStructure s;
  const auto& corners = j.at("corners");
  const auto& normals = j.at("normals");
  if (corners.size() != 6 || normals.size() != 6) {
    throw Error(ErrorCode::CorruptStream, "structure needs 6 corners and normals");
  }
  for (std::size_t i = 0; i < 6; ++i) {
    s.corners[i] = vec3_from(corners[i]);
    s.normals[i] = vec3_from(normals[i]);
  }
  return s;
}

// --- hand touch events, one JSON object per line ---

inline json to_json(const HandTouchEvent& e) {
  json wrist = json::array();
  for (const auto& m : e.observed_wrist) wrist.push_back(corners_to_json(m));
  return {{"corners", e.corners},
          {"fingers", e.fingers},
          {"glove_angles", to_json(e.glove_angles)},
          {"observed_wrist", wrist},
          {"mocap_wrist", to_json(e.mocap_wrist)}};
}

inline HandTouchEvent touch_event_from(const json& j) {
  HandTouchEvent e;
  e.corners = j.at("corners").get<std::vector<int>>();
  e.fingers = j.at("fingers").get<std::vector<int>>();
  e.glove_angles = matrix_from(j.at("glove_angles"), HandSkeleton::kSegments);
  const auto& wrist = j.at("observed_wrist");
  if (wrist.size() != 3) {
    throw Error(ErrorCode::CorruptStream, "expected 3 wrist marker squares");
  }
  for (std::size_t m = 0; m < 3; ++m) e.observed_wrist[m] = corners_from<4>(wrist[m]);
  e.mocap_wrist = vec3_from(j.at("mocap_wrist"));
  return e;
}

inline void save_touches(const std::vector<HandTouchEvent>& events, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  for (const auto& e : events) out << to_json(e).dump() << "\n";
}

inline std::vector<HandTouchEvent> load_touches(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::vector<HandTouchEvent> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    events.push_back(touch_event_from(json::parse(line)));
  }
  return events;
}

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptStream, std::string("bad json in ") + path + ": " + e.what());
  }
}

inline void save_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace mfk::tool
