#include "mfk/features.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mfk/errors.hpp"

namespace mfk {

namespace {

constexpr int kFeatureSchema = 1;

Mat3 yaw_rotation(double yaw) {
  Mat3 r;
  const double c = std::cos(yaw), s = std::sin(yaw);
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

Vec6 six_dim(const Mat3& r) {
  Vec6 v;
  v << r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1);
  return v;
}

double wrap_angle(double a) { return std::remainder(a, 2.0 * M_PI); }

}  // namespace

double yaw_of(const Mat3& rotation) {
  const Vec3 fwd = rotation.col(0);
  if (std::hypot(fwd.x(), fwd.y()) > 1e-9) {
    return std::atan2(fwd.y(), fwd.x());
  }
  const Vec3 side = rotation.col(1);
  return std::atan2(-side.x(), side.y());
}

RigidTransform relative_state(const RigidTransform& root_pose,
                              const RigidTransform& object_pose) {
  return compose(inverse(object_pose), root_pose);
}

std::vector<double> MotionFeatureFrame::flatten() const {
  const std::size_t j = joint_count();
  if (joint_rotations.size() != j || joint_velocities.size() != j) {
    throw Error(ErrorCode::DimensionMismatch, "ragged feature frame");
  }
  std::vector<double> out;
  out.reserve(dimension(j));
  out.push_back(root_height);
  out.push_back(root_velocity.x());
  out.push_back(root_velocity.y());
  out.push_back(yaw_velocity);
  for (const auto& p : joint_positions)
    for (int k = 0; k < 3; ++k) out.push_back(p[k]);
  for (const auto& r : joint_rotations)
    for (int k = 0; k < 6; ++k) out.push_back(r[k]);
  for (const auto& v : joint_velocities)
    for (int k = 0; k < 3; ++k) out.push_back(v[k]);
  for (const double c : foot_contacts) out.push_back(c);
  return out;
}

MotionFeatureFrame MotionFeatureFrame::from_flat(const std::vector<double>& values,
                                                 std::size_t joints) {
  if (values.size() != dimension(joints)) {
    throw Error(ErrorCode::DimensionMismatch, "feature vector length mismatch");
  }
  MotionFeatureFrame f;
  std::size_t i = 0;
  f.root_height = values[i++];
  f.root_velocity.x() = values[i++];
  f.root_velocity.y() = values[i++];
  f.yaw_velocity = values[i++];
  f.joint_positions.resize(joints);
  for (auto& p : f.joint_positions)
    for (int k = 0; k < 3; ++k) p[k] = values[i++];
  f.joint_rotations.resize(joints);
  for (auto& r : f.joint_rotations)
    for (int k = 0; k < 6; ++k) r[k] = values[i++];
  f.joint_velocities.resize(joints);
  for (auto& v : f.joint_velocities)
    for (int k = 0; k < 3; ++k) v[k] = values[i++];
  for (double& c : f.foot_contacts) c = values[i++];
  return f;
}

std::vector<MotionFeatureFrame> build_features(
    const std::vector<SkeletonFrame>& stream, const FeatureOptions& options) {
  if (stream.size() < 2) {
    throw Error(ErrorCode::TooShort, "need at least 2 frames");
  }
  const std::size_t joints = stream.front().joints.size();
  if (joints == 0) {
    throw Error(ErrorCode::DimensionMismatch, "empty skeleton frame");
  }
  for (const auto& frame : stream) {
    if (frame.joints.size() != joints) {
      throw Error(ErrorCode::DimensionMismatch, "joint count varies across frames");
    }
  }
  for (const int fj : options.foot_joints) {
    if (fj < 0 || static_cast<std::size_t>(fj) >= joints) {
      throw Error(ErrorCode::DimensionMismatch, "foot joint index out of range");
    }
  }

  std::vector<MotionFeatureFrame> out;
  out.reserve(stream.size() - 1);
  for (std::size_t t = 0; t + 1 < stream.size(); ++t) {
    const auto& cur = stream[t];
    const auto& nxt = stream[t + 1];
    const RigidTransform& root = cur.joints[0];
    const double yaw = yaw_of(root.rotation.toRotationMatrix());
    const Mat3 unyaw = yaw_rotation(-yaw);

    MotionFeatureFrame f;
    f.root_height = root.translation.z() - options.ground_z;
    const Vec3 dp = unyaw * (nxt.joints[0].translation - root.translation);
    f.root_velocity = Vec2(dp.x(), dp.y());
    const double yaw_next = yaw_of(nxt.joints[0].rotation.toRotationMatrix());
    f.yaw_velocity = wrap_angle(yaw_next - yaw);

    f.joint_positions.resize(joints);
    f.joint_rotations.resize(joints);
    f.joint_velocities.resize(joints);
    for (std::size_t j = 0; j < joints; ++j) {
      f.joint_positions[j] = unyaw * (cur.joints[j].translation - root.translation);
      f.joint_velocities[j] =
          unyaw * (nxt.joints[j].translation - cur.joints[j].translation);
      // root block carries the yaw-removed root rotation; the rest are
      // root-relative, which keeps the encoding heading-invariant without
      // needing the tree structure of the composite stream
      Mat3 local;
      if (j == 0) {
        local = unyaw * root.rotation.toRotationMatrix();
      } else {
        local = (root.rotation.conjugate() * cur.joints[j].rotation)
                    .toRotationMatrix();
      }
      f.joint_rotations[j] = six_dim(local);
    }
    for (int k = 0; k < 4; ++k) {
      const auto j = static_cast<std::size_t>(options.foot_joints[k]);
      const double height = cur.joints[j].translation.z() - options.ground_z;
      const double speed =
          (nxt.joints[j].translation - cur.joints[j].translation).norm();
      f.foot_contacts[static_cast<std::size_t>(k)] =
          (height < options.contact_height && speed < options.contact_speed) ? 1.0
                                                                             : 0.0;
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<RootTrajectoryPoint> reconstruct_root_trajectory(
    const std::vector<MotionFeatureFrame>& features,
    const RootTrajectoryPoint& initial) {
  std::vector<RootTrajectoryPoint> out;
  out.reserve(features.size() + 1);
  RootTrajectoryPoint p = initial;
  for (const auto& f : features) {
    p.position.z() = f.root_height;
    out.push_back(p);
    const Mat3 r = yaw_rotation(p.yaw);
    const Vec3 step = r * Vec3(f.root_velocity.x(), f.root_velocity.y(), 0.0);
    p.position += step;
    p.yaw = wrap_angle(p.yaw + f.yaw_velocity);
  }
  out.push_back(p);  // final height repeats the last known one
  if (!features.empty()) out.back().position.z() = features.back().root_height;
  return out;
}

void save_features(const std::vector<MotionFeatureFrame>& features,
                   const std::string& bin_path, const std::string& json_path,
                   double rate) {
  const std::size_t joints = features.empty() ? 0 : features.front().joint_count();
  const std::size_t dim = MotionFeatureFrame::dimension(joints);
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(ErrorCode::IoError, "cannot open " + bin_path);
  for (const auto& f : features) {
    if (f.joint_count() != joints) {
      throw Error(ErrorCode::DimensionMismatch, "joint count varies across frames");
    }
    const auto row = f.flatten();
    bin.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!bin) throw Error(ErrorCode::IoError, "write failed for " + bin_path);

  nlohmann::json header;
  header["schema_version"] = kFeatureSchema;
  header["dimension"] = dim;
  header["joints"] = joints;
  header["frames"] = features.size();
  header["rate"] = rate;
  header["dtype"] = "float64";
  std::ofstream js(json_path);
  if (!js) throw Error(ErrorCode::IoError, "cannot open " + json_path);
  js << header.dump(2) << '\n';
  if (!js) throw Error(ErrorCode::IoError, "write failed for " + json_path);
}

std::vector<MotionFeatureFrame> load_features(const std::string& bin_path,
                                              const std::string& json_path,
                                              double* rate) {
  std::ifstream js(json_path);
  if (!js) throw Error(ErrorCode::IoError, "cannot open " + json_path);
  nlohmann::json header;
  try {
    js >> header;
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::CorruptStream, "bad feature header");
  }
  if (header.value("schema_version", -1) != kFeatureSchema) {
    throw Error(ErrorCode::SchemaVersionMismatch, "feature header version");
  }
  const auto joints = header.at("joints").get<std::size_t>();
  const auto frames = header.at("frames").get<std::size_t>();
  const auto dim = header.at("dimension").get<std::size_t>();
  if (dim != MotionFeatureFrame::dimension(joints)) {
    throw Error(ErrorCode::CorruptStream, "feature dimension mismatch");
  }
  if (rate) *rate = header.at("rate").get<double>();

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw Error(ErrorCode::IoError, "cannot open " + bin_path);
  std::vector<MotionFeatureFrame> out;
  out.reserve(frames);
  std::vector<double> row(dim);
  for (std::size_t i = 0; i < frames; ++i) {
    bin.read(reinterpret_cast<char*>(row.data()),
             static_cast<std::streamsize>(dim * sizeof(double)));
    if (!bin) throw Error(ErrorCode::CorruptStream, "feature matrix truncated");
    out.push_back(MotionFeatureFrame::from_flat(row, joints));
  }
  return out;
}

}  // namespace mfk
