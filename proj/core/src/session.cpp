#include "mfk/session.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "mfk/errors.hpp"

namespace mfk {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::CorruptStream, "expected a 3-vector");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json quat_json(const Quat& q) {
  return json::array({q.w(), q.x(), q.y(), q.z()});
}

Quat quat_from(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw Error(ErrorCode::CorruptStream, "expected a quaternion (w,x,y,z)");
  }
  return Quat(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
              j[3].get<double>());
}

json mat3_json(const Mat3& m) {
  json out = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
  return out;
}

Mat3 mat3_from(const json& j) {
  if (!j.is_array() || j.size() != 9) {
    throw Error(ErrorCode::CorruptStream, "expected 9 row-major floats");
  }
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j[static_cast<std::size_t>(3 * r + c)].get<double>();
  return m;
}

json angles_json(const Eigen::MatrixX3d& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  }
  return out;
}

Eigen::MatrixX3d angles_from(const json& j, Eigen::Index rows, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw Error(ErrorCode::CorruptStream, std::string(what) + " must have " +
                                              std::to_string(rows) + " rows");
  }
  Eigen::MatrixX3d m(rows, 3);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || row.size() != 3) {
      throw Error(ErrorCode::CorruptStream, std::string(what) + ": bad row");
    }
    for (int c = 0; c < 3; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

// streams a .jsonl file, one parsed object per line
template <typename Fn>
void read_jsonl(const std::string& path, Fn&& per_record) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw Error(ErrorCode::CorruptStream,
                  path + ":" + std::to_string(lineno) + ": bad record");
    }
    try {
      per_record(j);
    } catch (const json::exception&) {
      throw Error(ErrorCode::CorruptStream,
                  path + ":" + std::to_string(lineno) + ": missing field");
    }
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path);
  return out;
}

void finish_out(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace

MocapRecord::MocapRecord()
    : body_angles(Eigen::MatrixX3d::Zero(23, 3)),
      left_hand(Eigen::MatrixX3d::Zero(20, 3)),
      right_hand(Eigen::MatrixX3d::Zero(20, 3)) {}

bool operator==(const DetectionRecord& a, const DetectionRecord& b) {
  return a.frame == b.frame && a.camera_id == b.camera_id &&
         a.marker_id == b.marker_id &&
         std::equal(a.corners.begin(), a.corners.end(), b.corners.begin(),
                    [](const Vec2& x, const Vec2& y) { return x == y; });
}

bool operator==(const MocapRecord& a, const MocapRecord& b) {
  return a.frame == b.frame && a.body_angles == b.body_angles &&
         a.left_hand == b.left_hand && a.right_hand == b.right_hand;
}

bool operator==(const PoseRecord& a, const PoseRecord& b) {
  return a.frame == b.frame && a.object == b.object &&
         a.pose.rotation.coeffs() == b.pose.rotation.coeffs() &&
         a.pose.translation == b.pose.translation && a.states == b.states;
}

void CaptureSession::validate() const {
  for (std::size_t i = 1; i < detections.size(); ++i) {
    const auto& p = detections[i - 1];
    const auto& c = detections[i];
    if (std::tie(p.frame, p.camera_id, p.marker_id) >=
        std::tie(c.frame, c.camera_id, c.marker_id)) {
      throw Error(ErrorCode::CorruptStream, "detections out of order");
    }
  }
  for (std::size_t i = 1; i < mocap.size(); ++i) {
    if (mocap[i - 1].frame >= mocap[i].frame) {
      throw Error(ErrorCode::CorruptStream, "mocap frames out of order");
    }
  }
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const auto& p = poses[i - 1];
    const auto& c = poses[i];
    if (std::tie(p.frame, p.object) >= std::tie(c.frame, c.object)) {
      throw Error(ErrorCode::CorruptStream, "poses out of order");
    }
  }
  for (std::size_t i = 1; i < contacts.size(); ++i) {
    if (contacts[i - 1].frame > contacts[i].frame) {
      throw Error(ErrorCode::CorruptStream, "contacts out of order");
    }
  }
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash_hex(std::string_view canonical_config) {
  std::ostringstream out;
  out << std::hex << fnv1a(canonical_config);
  return out.str();
}

void save_cameras(const std::vector<CameraModel>& rig, const std::string& path) {
  json out = json::array();
  for (const auto& cam : rig) {
    json c;
    c["id"] = cam.id;
    c["K"] = mat3_json(cam.intrinsics);
    c["R"] = mat3_json(cam.extrinsics.rotation_matrix());
    c["t"] = vec3_json(cam.extrinsics.translation);
    c["width"] = cam.width;
    c["height"] = cam.height;
    out.push_back(std::move(c));
  }
  auto f = open_out(path);
  f << out.dump(2) << '\n';
  finish_out(f, path);
}

std::vector<CameraModel> load_cameras(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    throw Error(ErrorCode::CorruptStream, path + ": bad camera file");
  }
  if (!j.is_array()) throw Error(ErrorCode::CorruptStream, path + ": expected array");
  std::vector<CameraModel> rig;
  rig.reserve(j.size());
  for (const auto& c : j) {
    try {
      const Mat3 r = mat3_from(c.at("R"));
      const RigidTransform ext(Quat(r), vec3_from(c.at("t")));
      rig.emplace_back(c.at("id").get<int>(), mat3_from(c.at("K")), ext,
                       c.at("width").get<int>(), c.at("height").get<int>());
    } catch (const json::exception&) {
      throw Error(ErrorCode::CorruptStream, path + ": camera record missing field");
    }
  }
  return rig;
}

void save_detections(const std::vector<DetectionRecord>& recs, const std::string& path) {
  auto out = open_out(path);
  for (const auto& r : recs) {
    json j;
    j["frame"] = r.frame;
    j["camera_id"] = r.camera_id;
    j["marker_id"] = r.marker_id;
    json corners = json::array();
    for (const auto& c : r.corners) corners.push_back(json::array({c.x(), c.y()}));
    j["corners"] = std::move(corners);
    out << j.dump() << '\n';
  }
  finish_out(out, path);
}

std::vector<DetectionRecord> load_detections(const std::string& path) {
  std::vector<DetectionRecord> recs;
  read_jsonl(path, [&](const json& j) {
    DetectionRecord r;
    r.frame = j.at("frame").get<std::int64_t>();
    r.camera_id = j.at("camera_id").get<int>();
    r.marker_id = j.at("marker_id").get<int>();
    const auto& corners = j.at("corners");
    if (!corners.is_array() || corners.size() != 4) {
      throw Error(ErrorCode::CorruptStream, path + ": detection needs 4 corners");
    }
    for (int c = 0; c < 4; ++c) {
      const auto& uv = corners[static_cast<std::size_t>(c)];
      if (!uv.is_array() || uv.size() != 2) {
        throw Error(ErrorCode::CorruptStream, path + ": bad corner");
      }
      r.corners[static_cast<std::size_t>(c)] =
          Vec2(uv[0].get<double>(), uv[1].get<double>());
    }
    if (!recs.empty()) {
      const auto& p = recs.back();
      if (std::tie(p.frame, p.camera_id, p.marker_id) >=
          std::tie(r.frame, r.camera_id, r.marker_id)) {
        throw Error(ErrorCode::CorruptStream, path + ": detections out of order");
      }
    }
    recs.push_back(std::move(r));
  });
  return recs;
}

void save_mocap(const std::vector<MocapRecord>& recs, const std::string& path) {
  auto out = open_out(path);
  for (const auto& r : recs) {
    json j;
    j["frame"] = r.frame;
    j["body_angles"] = angles_json(r.body_angles);
    j["left_hand"] = angles_json(r.left_hand);
    j["right_hand"] = angles_json(r.right_hand);
    out << j.dump() << '\n';
  }
  finish_out(out, path);
}

std::vector<MocapRecord> load_mocap(const std::string& path) {
  std::vector<MocapRecord> recs;
  read_jsonl(path, [&](const json& j) {
    MocapRecord r;
    r.frame = j.at("frame").get<std::int64_t>();
    r.body_angles = angles_from(j.at("body_angles"), 23, "body_angles");
    r.left_hand = angles_from(j.at("left_hand"), 20, "left_hand");
    r.right_hand = angles_from(j.at("right_hand"), 20, "right_hand");
    if (!recs.empty() && recs.back().frame >= r.frame) {
      throw Error(ErrorCode::CorruptStream, path + ": mocap frames out of order");
    }
    recs.push_back(std::move(r));
  });
  return recs;
}

void save_poses(const std::vector<PoseRecord>& recs, const std::string& path) {
  auto out = open_out(path);
  for (const auto& r : recs) {
    json j;
    j["frame"] = r.frame;
    j["object"] = r.object;
    j["l"] = vec3_json(r.pose.translation);
    j["q"] = quat_json(r.pose.rotation);
    j["states"] = r.states;
    out << j.dump() << '\n';
  }
  finish_out(out, path);
}

std::vector<PoseRecord> load_poses(const std::string& path) {
  std::vector<PoseRecord> recs;
  read_jsonl(path, [&](const json& j) {
    PoseRecord r;
    r.frame = j.at("frame").get<std::int64_t>();
    r.object = j.at("object").get<std::string>();
    r.pose = RigidTransform(quat_from(j.at("q")), vec3_from(j.at("l")));
    r.states = j.at("states").get<std::vector<double>>();
    if (!recs.empty()) {
      const auto& p = recs.back();
      if (std::tie(p.frame, p.object) >= std::tie(r.frame, r.object)) {
        throw Error(ErrorCode::CorruptStream, path + ": poses out of order");
      }
    }
    recs.push_back(std::move(r));
  });
  return recs;
}

void save_contacts(const std::vector<ContactRecord>& recs, const std::string& path) {
  auto out = open_out(path);
  for (const auto& r : recs) {
    json j;
    j["frame"] = r.frame;
    j["party"] = to_string(r.party);
    j["object"] = r.object;
    j["part"] = r.part;
    out << j.dump() << '\n';
  }
  finish_out(out, path);
}

std::vector<ContactRecord> load_contacts(const std::string& path) {
  std::vector<ContactRecord> recs;
  read_jsonl(path, [&](const json& j) {
    ContactRecord r;
    r.frame = j.at("frame").get<std::int64_t>();
    r.party = contact_party_from_string(j.at("party").get<std::string>());
    r.object = j.at("object").get<std::string>();
    r.part = j.at("part").get<int>();
    if (!recs.empty() && recs.back().frame > r.frame) {
      throw Error(ErrorCode::CorruptStream, path + ": contacts out of order");
    }
    recs.push_back(std::move(r));
  });
  return recs;
}

void save_object(const ObjectSpec& object, const std::string& dir) {
  fs::create_directories(dir);
  save_obj(object.mesh, (fs::path(dir) / "mesh.obj").string());
  json parts = json::array();
  for (const auto& p : object.parts) {
    json j;
    j["part"] = p.part;
    j["kind"] = p.kind;
    j["axis"] = vec3_json(p.axis);
    if (p.pivot) j["pivot"] = vec3_json(*p.pivot);
    json cubes = json::array();
    for (const auto& cube : p.cubes) {
      json c;
      c["id"] = cube.id;
      c["edge"] = cube.edge_length;
      c["l"] = vec3_json(cube.mount.translation);
      c["q"] = quat_json(cube.mount.rotation);
      cubes.push_back(std::move(c));
    }
    j["cubes"] = std::move(cubes);
    parts.push_back(std::move(j));
  }
  const auto path = (fs::path(dir) / "parts.json").string();
  auto out = open_out(path);
  out << parts.dump(2) << '\n';
  finish_out(out, path);
}

ObjectSpec load_object(const std::string& dir, const std::string& name) {
  ObjectSpec object;
  object.name = name;
  object.mesh = load_obj((fs::path(dir) / "mesh.obj").string());
  const auto path = (fs::path(dir) / "parts.json").string();
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  json parts;
  try {
    in >> parts;
  } catch (const json::exception&) {
    throw Error(ErrorCode::CorruptStream, path + ": bad parts file");
  }
  if (!parts.is_array()) {
    throw Error(ErrorCode::CorruptStream, path + ": expected array");
  }
  for (const auto& j : parts) {
    try {
      ObjectPart p;
      p.part = j.at("part").get<std::string>();
      p.kind = j.at("kind").get<std::string>();
      if (p.kind != "fixed" && p.kind != "revolute" && p.kind != "sliding") {
        throw Error(ErrorCode::CorruptStream, path + ": unknown kind " + p.kind);
      }
      p.axis = vec3_from(j.at("axis"));
      if (j.contains("pivot")) p.pivot = vec3_from(j.at("pivot"));
      for (const auto& c : j.at("cubes")) {
        p.cubes.emplace_back(
            c.at("id").get<int>(), c.at("edge").get<double>(),
            RigidTransform(quat_from(c.at("q")), vec3_from(c.at("l"))));
      }
      object.parts.push_back(std::move(p));
    } catch (const json::exception&) {
      throw Error(ErrorCode::CorruptStream, path + ": part record missing field");
    }
  }
  return object;
}

void save_session(const CaptureSession& session, const std::string& dir) {
  session.validate();
  fs::create_directories(dir);
  const fs::path root(dir);

  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["camera_rate"] = session.camera_rate;
  manifest["mocap_rate"] = session.mocap_rate;
  manifest["tool_version"] = session.provenance.tool_version;
  manifest["seed"] = session.provenance.seed;
  manifest["config_hash"] = session.provenance.config_hash;
  json names = json::array();
  for (const auto& obj : session.objects) names.push_back(obj.name);
  manifest["objects"] = std::move(names);
  manifest["has_poses"] = !session.poses.empty();
  manifest["has_contacts"] = !session.contacts.empty();
  {
    const auto path = (root / "session.json").string();
    auto out = open_out(path);
    out << manifest.dump(2) << '\n';
    finish_out(out, path);
  }

  save_cameras(session.rig, (root / "cameras.json").string());
  save_detections(session.detections, (root / "detections.jsonl").string());
  save_mocap(session.mocap, (root / "mocap.jsonl").string());
  for (const auto& obj : session.objects) {
    save_object(obj, (root / "objects" / obj.name).string());
  }
  if (!session.poses.empty()) {
    save_poses(session.poses, (root / "poses.jsonl").string());
  }
  if (!session.contacts.empty()) {
    save_contacts(session.contacts, (root / "contacts.jsonl").string());
  }
}

CaptureSession load_session(const std::string& dir) {
  const fs::path root(dir);
  const auto manifest_path = (root / "session.json").string();
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + manifest_path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception&) {
    throw Error(ErrorCode::CorruptStream, manifest_path + ": bad manifest");
  }
  if (manifest.value("schema_version", -1) != kSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch,
                manifest_path + ": unsupported schema version");
  }

  CaptureSession session;
  try {
    session.camera_rate = manifest.at("camera_rate").get<double>();
    session.mocap_rate = manifest.at("mocap_rate").get<double>();
    session.provenance.tool_version = manifest.at("tool_version").get<std::string>();
    session.provenance.seed = manifest.at("seed").get<std::uint64_t>();
    session.provenance.config_hash = manifest.at("config_hash").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::CorruptStream, manifest_path + ": manifest missing field");
  }

  session.rig = load_cameras((root / "cameras.json").string());
  session.detections = load_detections((root / "detections.jsonl").string());
  session.mocap = load_mocap((root / "mocap.jsonl").string());
  for (const auto& name : manifest.at("objects")) {
    const auto n = name.get<std::string>();
    session.objects.push_back(load_object((root / "objects" / n).string(), n));
  }
  if (manifest.value("has_poses", false)) {
    session.poses = load_poses((root / "poses.jsonl").string());
  }
  if (manifest.value("has_contacts", false)) {
    session.contacts = load_contacts((root / "contacts.jsonl").string());
  }
  session.validate();
  return session;
}

}  // namespace mfk
