#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <vector>

#include "mfk/errors.hpp"

namespace mfk {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// SE(3) element. Rotation kept as a unit quaternion; normalized on
// construction, norm must be within 1e-9 of 1 afterwards.
struct RigidTransform {
  Quat rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};

  RigidTransform() = default;
  RigidTransform(const Quat& q, const Vec3& t);

  static RigidTransform identity() { return RigidTransform{}; }
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Eigen::Matrix4d matrix() const;
  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
};

// result applies b first, then a
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& t);

// rotation angle of t in radians, in [0, pi]
double rotation_angle(const RigidTransform& t);
// rotation angle between two transforms (of inverse(a)∘b)
double angular_distance(const RigidTransform& a, const RigidTransform& b);

// axis-angle helpers used by skeletons and joint fitting
Mat3 rodrigues(const Vec3& axis_angle);
Vec3 log_rotation(const Mat3& r);  // inverse of rodrigues, angle in [0, pi]

struct CameraModel {
  int id = 0;
  Mat3 intrinsics = Mat3::Identity();     // pixels
  RigidTransform extrinsics;              // world -> camera
  int width = 0;
  int height = 0;

  CameraModel() = default;
  CameraModel(int id, const Mat3& k, const RigidTransform& world_to_camera,
              int width, int height);

  // pinhole projection; throws BehindCamera when camera-frame depth <= 1e-9 m
  Vec2 project(const Vec3& world_point) const;

  Vec3 center() const;  // camera center in world coordinates
};

// cube with one square fiducial per face; corners live in the cube-local
// frame, mount maps cube frame into the host (object or body part) frame
struct MarkerCube {
  int id = 0;
  double edge_length = 0.06;
  RigidTransform mount;

  MarkerCube() = default;
  MarkerCube(int id, double edge_length, const RigidTransform& mount);

  // face f in 0..5 (+x,-x,+y,-y,+z,-z), corner c in 0..3, counter-clockwise
  // viewed from outside the cube
  Vec3 corner_local(int face, int corner) const;
  Vec3 face_normal_local(int face) const;
  // all 24 corners, index = face*4 + corner
  std::vector<Vec3> corners_local() const;
  // corners mapped through mount into the host frame
  std::vector<Vec3> corners_host() const;

  static constexpr int kFaces = 6;
  static constexpr int kCornersPerFace = 4;
};

// one mocap sample: suit + glove joint angles plus the root pose the suit
// reports in its own odometry frame
struct PersonState {
  Eigen::MatrixX3d body;        // 23 x 3 radians
  Eigen::MatrixX3d left_hand;   // 20 x 3 radians
  Eigen::MatrixX3d right_hand;  // 20 x 3 radians
  RigidTransform root;

  PersonState();
  void validate() const;  // finite entries, exact dimensions

  static constexpr int kBodyJoints = 23;
  static constexpr int kHandJoints = 20;
};

struct ObjectState {
  Vec3 translation{0.0, 0.0, 0.0};
  Quat orientation{1.0, 0.0, 0.0, 0.0};
  std::vector<double> part_states;  // radians (revolute) or meters (sliding)

  RigidTransform pose() const { return RigidTransform(orientation, translation); }
  static ObjectState from_pose(const RigidTransform& t, std::vector<double> states = {});
};

}  // namespace mfk
