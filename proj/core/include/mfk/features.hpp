#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mfk/types.hpp"

namespace mfk {

// One pose of the tracked figure in world space. Ground plane is z = 0,
// z up. joints[0] is the root; the rest follow the composite joint order
// used when the stream was assembled.
struct SkeletonFrame {
  std::vector<RigidTransform> joints;
};

using Vec6 = Eigen::Matrix<double, 6, 1>;

// Frame t describes the pose at t plus the motion t -> t+1, all in the
// yaw-aligned root frame of frame t. A stream of N skeleton frames yields
// N-1 feature frames.
struct MotionFeatureFrame {
  double root_height = 0;             // root z, meters
  Vec2 root_velocity = Vec2::Zero();  // planar, m/frame
  double yaw_velocity = 0;            // rad/frame
  std::vector<Vec3> joint_positions;  // root-local
  std::vector<Vec6> joint_rotations;  // first two rotation columns stacked
  std::vector<Vec3> joint_velocities; // m/frame
  std::array<double, 4> foot_contacts = {0, 0, 0, 0};

  std::size_t joint_count() const { return joint_positions.size(); }
  // 1 + 2 + 1 + 3J + 6J + 3J + 4
  static std::size_t dimension(std::size_t joints) { return 8 + 12 * joints; }

  std::vector<double> flatten() const;
  static MotionFeatureFrame from_flat(const std::vector<double>& values,
                                      std::size_t joints);
};

struct FeatureOptions {
  // indices into SkeletonFrame::joints used for the four contact flags,
  // ordered (right heel, right toe, left heel, left toe)
  std::array<int, 4> foot_joints = {0, 0, 0, 0};
  double ground_z = 0.0;            // heights are measured above this plane
  double contact_height = 0.05;     // m
  double contact_speed = 0.01;      // m/frame
};

// Throws TooShort for fewer than 2 frames, DimensionMismatch for ragged
// joint counts or out-of-range foot indices.
std::vector<MotionFeatureFrame> build_features(
    const std::vector<SkeletonFrame>& stream, const FeatureOptions& options);

// Integrates root velocities from an initial planar state back into world
// planar poses (x, y, yaw), one per input skeleton frame (N = features+1).
// Heights come from root_height; the final frame repeats the last height.
struct RootTrajectoryPoint {
  Vec3 position = Vec3::Zero();
  double yaw = 0;
};
std::vector<RootTrajectoryPoint> reconstruct_root_trajectory(
    const std::vector<MotionFeatureFrame>& features,
    const RootTrajectoryPoint& initial);

// Planar yaw of a rotation: heading of the rotated +x axis. Falls back to
// the +y axis image when +x points straight up or down.
double yaw_of(const Mat3& rotation);

// Pose of the person root expressed in the object frame:
// inverse(object_pose) ∘ root_pose.
RigidTransform relative_state(const RigidTransform& root_pose,
                              const RigidTransform& object_pose);

// Flat float64 matrix [frames × dimension] plus a JSON sidecar describing
// dimension, joint count, and rate.
void save_features(const std::vector<MotionFeatureFrame>& features,
                   const std::string& bin_path, const std::string& json_path,
                   double rate);
std::vector<MotionFeatureFrame> load_features(const std::string& bin_path,
                                              const std::string& json_path,
                                              double* rate = nullptr);

}  // namespace mfk
