#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfk/contacts.hpp"
#include "mfk/mesh.hpp"
#include "mfk/types.hpp"

namespace mfk {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// All quaternions on disk are (w, x, y, z).

struct DetectionRecord {
  std::int64_t frame = 0;
  int camera_id = 0;
  int marker_id = 0;
  std::array<Vec2, 4> corners = {};  // pixel (u, v), corner order 0..3

  friend bool operator==(const DetectionRecord&, const DetectionRecord&);
};

struct MocapRecord {
  std::int64_t frame = 0;
  Eigen::MatrixX3d body_angles;  // 23 x 3 rad
  Eigen::MatrixX3d left_hand;    // 20 x 3
  Eigen::MatrixX3d right_hand;   // 20 x 3

  MocapRecord();
  friend bool operator==(const MocapRecord&, const MocapRecord&);
};

struct ObjectPart {
  std::string part;
  std::string kind;  // "fixed" | "revolute" | "sliding"
  Vec3 axis = Vec3::Zero();
  std::optional<Vec3> pivot;
  std::vector<MarkerCube> cubes;
};

struct ObjectSpec {
  std::string name;
  TriangleMesh mesh;
  std::vector<ObjectPart> parts;
};

struct PoseRecord {
  std::int64_t frame = 0;
  std::string object;
  RigidTransform pose;
  std::vector<double> states;

  friend bool operator==(const PoseRecord&, const PoseRecord&);
};

struct Provenance {
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
  std::string config_hash;  // hex fnv-1a of the canonical config text
};

struct CaptureSession {
  std::vector<CameraModel> rig;
  double camera_rate = 30.0;
  double mocap_rate = 60.0;
  std::vector<DetectionRecord> detections;  // (frame, camera, marker) ascending
  std::vector<MocapRecord> mocap;           // frame ascending
  std::vector<ObjectSpec> objects;
  std::vector<PoseRecord> poses;        // solved artifact, may be empty
  std::vector<ContactRecord> contacts;  // solved artifact, may be empty
  Provenance provenance;

  // stream-order invariants; throws CorruptStream
  void validate() const;
};

std::uint64_t fnv1a(std::string_view text);
std::string config_hash_hex(std::string_view canonical_config);

// Directory bundle: session.json + cameras.json + detections.jsonl +
// mocap.jsonl + objects/<name>/{mesh.obj, parts.json} and, when present,
// poses.jsonl + contacts.jsonl. Loading verifies the schema version and
// stream monotonicity (SchemaVersionMismatch, CorruptStream).
void save_session(const CaptureSession& session, const std::string& dir);
CaptureSession load_session(const std::string& dir);

void save_cameras(const std::vector<CameraModel>& rig, const std::string& path);
std::vector<CameraModel> load_cameras(const std::string& path);

void save_detections(const std::vector<DetectionRecord>& recs, const std::string& path);
std::vector<DetectionRecord> load_detections(const std::string& path);

void save_mocap(const std::vector<MocapRecord>& recs, const std::string& path);
std::vector<MocapRecord> load_mocap(const std::string& path);

void save_poses(const std::vector<PoseRecord>& recs, const std::string& path);
std::vector<PoseRecord> load_poses(const std::string& path);

void save_contacts(const std::vector<ContactRecord>& recs, const std::string& path);
std::vector<ContactRecord> load_contacts(const std::string& path);

void save_object(const ObjectSpec& object, const std::string& dir);
ObjectSpec load_object(const std::string& dir, const std::string& name);

}  // namespace mfk
