#include "mfk/types.hpp"

#include <cmath>

namespace mfk {

RigidTransform::RigidTransform(const Quat& q, const Vec3& t) : rotation(q), translation(t) {
  const double n = rotation.norm();
  if (!std::isfinite(n) || n < 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "rotation quaternion has no direction");
  }
  rotation.coeffs() /= n;
  if (!translation.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "translation not finite");
  }
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  Mat3 r = m.topLeftCorner<3, 3>();
  if (std::abs(r.determinant() - 1.0) > 1e-6) {
    throw Error(ErrorCode::InvalidArgument, "matrix rotation block is not proper");
  }
  return RigidTransform(Quat(r), m.topRightCorner<3, 1>());
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.rotation.normalize();
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

RigidTransform inverse(const RigidTransform& t) {
  RigidTransform out;
  out.rotation = t.rotation.conjugate();
  out.translation = -(out.rotation * t.translation);
  return out;
}

double rotation_angle(const RigidTransform& t) {
  const double w = std::min(1.0, std::abs(t.rotation.w()) / t.rotation.norm());
  return 2.0 * std::acos(w);
}

double angular_distance(const RigidTransform& a, const RigidTransform& b) {
  return rotation_angle(compose(inverse(a), b));
}

Mat3 rodrigues(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-12) {
    // second-order expansion keeps gradients smooth near zero
    Mat3 k = Mat3::Zero();
    k(0, 1) = -axis_angle.z(); k(0, 2) = axis_angle.y();
    k(1, 0) = axis_angle.z();  k(1, 2) = -axis_angle.x();
    k(2, 0) = -axis_angle.y(); k(2, 1) = axis_angle.x();
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Vec3 log_rotation(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

CameraModel::CameraModel(int id_, const Mat3& k, const RigidTransform& world_to_camera,
                         int width_, int height_)
    : id(id_), intrinsics(k), extrinsics(world_to_camera), width(width_), height(height_) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "camera resolution must be positive");
  }
  if (!(k(0, 0) > 0.0) || !(k(1, 1) > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "focal lengths must be positive");
  }
  if (k(1, 0) != 0.0 || k(2, 0) != 0.0 || k(2, 1) != 0.0) {
    throw Error(ErrorCode::InvalidArgument, "intrinsics must be upper triangular");
  }
  const double cx = k(0, 2), cy = k(1, 2);
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw Error(ErrorCode::InvalidArgument, "principal point outside resolution bounds");
  }
}

Vec2 CameraModel::project(const Vec3& world_point) const {
  const Vec3 cam = extrinsics.apply(world_point);
  if (cam.z() <= 1e-9) {
    throw Error(ErrorCode::BehindCamera, "point depth <= 1e-9 m in camera frame");
  }
  const Vec3 h = intrinsics * (cam / cam.z());
  return h.head<2>();
}

Vec3 CameraModel::center() const { return inverse(extrinsics).translation; }

MarkerCube::MarkerCube(int id_, double edge, const RigidTransform& mount_)
    : id(id_), edge_length(edge), mount(mount_) {
  if (!(edge_length > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "cube edge length must be positive");
  }
}

namespace {

// outward normal n plus in-plane axes (u, v) with u x v = n, per face
struct FaceFrame {
  Vec3 n, u, v;
};

FaceFrame face_frame(int face) {
  switch (face) {
    case 0: return {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    case 1: return {{-1, 0, 0}, {0, 0, 1}, {0, 1, 0}};
    case 2: return {{0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
    case 3: return {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}};
    case 4: return {{0, 0, 1}, {1, 0, 0}, {0, 1, 0}};
    case 5: return {{0, 0, -1}, {0, 1, 0}, {1, 0, 0}};
    default:
      throw Error(ErrorCode::InvalidArgument, "face index out of range");
  }
}

}  // namespace

Vec3 MarkerCube::corner_local(int face, int corner) const {
  if (corner < 0 || corner >= kCornersPerFace) {
    throw Error(ErrorCode::InvalidArgument, "corner index out of range");
  }
  const FaceFrame f = face_frame(face);
  const double h = 0.5 * edge_length;
  static const double su[4] = {-1, 1, 1, -1};
  static const double sv[4] = {-1, -1, 1, 1};
  return h * f.n + h * su[corner] * f.u + h * sv[corner] * f.v;
}

Vec3 MarkerCube::face_normal_local(int face) const { return face_frame(face).n; }

std::vector<Vec3> MarkerCube::corners_local() const {
  std::vector<Vec3> out;
  out.reserve(kFaces * kCornersPerFace);
  for (int f = 0; f < kFaces; ++f)
    for (int c = 0; c < kCornersPerFace; ++c) out.push_back(corner_local(f, c));
  return out;
}

std::vector<Vec3> MarkerCube::corners_host() const {
  std::vector<Vec3> out = corners_local();
  for (auto& p : out) p = mount.apply(p);
  return out;
}

PersonState::PersonState()
    : body(Eigen::MatrixX3d::Zero(kBodyJoints, 3)),
      left_hand(Eigen::MatrixX3d::Zero(kHandJoints, 3)),
      right_hand(Eigen::MatrixX3d::Zero(kHandJoints, 3)) {}

void PersonState::validate() const {
  if (body.rows() != kBodyJoints || left_hand.rows() != kHandJoints ||
      right_hand.rows() != kHandJoints) {
    throw Error(ErrorCode::DimensionMismatch, "person state has wrong joint count");
  }
  if (!body.allFinite() || !left_hand.allFinite() || !right_hand.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "joint angles not finite");
  }
}

ObjectState ObjectState::from_pose(const RigidTransform& t, std::vector<double> states) {
  ObjectState s;
  s.translation = t.translation;
  s.orientation = t.rotation;
  s.part_states = std::move(states);
  return s;
}

}  // namespace mfk
