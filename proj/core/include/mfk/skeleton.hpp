#pragma once

#include <array>
#include <string>
#include <vector>

#include "mfk/types.hpp"

namespace mfk {

// Joint angles are axis-angle 3-vectors; a joint's pose is
// T_parent * Trans(offset) * Rot(theta). Joints are stored in topological
// order with the root at index 0.

struct BodyJoint {
  std::string name;
  int parent = -1;  // -1 for the root
  Vec3 offset{0.0, 0.0, 0.0};
};

// square fiducial rigidly attached to a body part; corners in the part's
// local joint frame, correspondence is by (marker, corner) index for good
struct BodyMarker {
  int joint = 0;
  std::array<Vec3, 4> corners;
};

struct BodySkeleton {
  std::vector<BodyJoint> joints;    // 23
  std::vector<BodyMarker> markers;  // 3-4 per instrumented part, 11 parts

  void validate() const;
  int joint_index(const std::string& name) const;  // -1 when absent

  // canonical z-up template: pelvis root, spine chain, arms along +-y,
  // legs down, toes forward +x; 11 marker-carrying parts
  static BodySkeleton standard();
  // joints held inside the ground band during calibration (feet and toes)
  static std::vector<std::string> ground_joint_names();

  static constexpr int kJoints = 23;
};

struct BodyFk {
  std::vector<RigidTransform> joint_poses;          // person frame
  std::vector<std::array<Vec3, 4>> marker_corners;  // one entry per skeleton marker
};

// throws DimensionMismatch unless angles is joints.size() x 3
BodyFk fk_body(const BodySkeleton& skel, const Eigen::MatrixX3d& angles,
               const RigidTransform& root = RigidTransform::identity());

struct HandSegment {
  std::string name;
  int parent = -1;
  Vec3 base_offset{0.0, 0.0, 0.0};  // template, before scale and offset
};

// 20 segments: wrist root, 3-segment thumb, 4 segments for each other
// finger. Effective child offset is scale * base_offset + offset.
struct HandSkeleton {
  std::vector<HandSegment> segments;
  Eigen::VectorXd scales;      // 20, each in [0.8, 1.2]
  Eigen::MatrixX3d offsets;    // 20 x 3, per-coordinate magnitude <= 0.01 m
  std::array<std::array<Vec3, 4>, 3> wrist_markers;  // hand-local corner sets

  void validate() const;  // throws ConstraintViolation on bound violations
  static HandSkeleton standard(bool left);
  // segment index of each fingertip, thumb first
  static std::array<int, 5> fingertip_segments();

  static constexpr int kSegments = 20;
  static constexpr double kScaleMin = 0.8;
  static constexpr double kScaleMax = 1.2;
  static constexpr double kOffsetBound = 0.01;
};

struct HandFk {
  std::vector<RigidTransform> segment_poses;
  std::array<Vec3, 5> fingertips;  // thumb, index, middle, ring, little
};

HandFk fk_hand(const HandSkeleton& skel, const Eigen::MatrixX3d& angles,
               const RigidTransform& root = RigidTransform::identity());

}  // namespace mfk
