#pragma once

#include <vector>

#include "mfk/multiview.hpp"
#include "mfk/types.hpp"

namespace mfk {

// Convention used throughout: pose transforms map local coordinates into the
// world (camera-system) frame. A cube's mount maps cube-local coordinates
// into its host part's canonical frame.

struct MarkerCorrespondence {
  std::vector<Vec3> canonical;
  std::vector<Vec3> observed;
  std::vector<double> weights;  // empty means all 1

  void validate() const;
};

// weighted least-squares rigid alignment canonical -> observed; rotation is
// always proper (det +1), reflection-prone inputs included
RigidTransform kabsch(const MarkerCorrespondence& c);

// weighted RMS of ||T canonical_i - observed_i|| at the kabsch solution
double kabsch_residual_rms(const MarkerCorrespondence& c, const RigidTransform& t);

// Pose of the host part from this frame's triangulated corners of one cube.
// marker_to_object maps cube-local coordinates into the object-canonical
// frame (for a mounted cube this is its mount). Corner weights are
// 1/(1 + reprojection_rms). Throws TooFewCorners below 3 distinct corners.
RigidTransform object_pose(const std::vector<TriangulatedCorner>& markers_now,
                           const MarkerCube& cube, const RigidTransform& marker_to_object);

// Multiple cubes rigidly mounted on one part: a single joint correspondence
// set, not an average of per-cube poses.
RigidTransform object_pose(const std::vector<TriangulatedCorner>& markers_now,
                           const std::vector<MarkerCube>& cubes);

struct MountSolution {
  RigidTransform marker_to_object;
  double residual_rms = 0.0;  // meters, over the scan correspondences
};

// Recovers the fixed cube->object transform from scan/world point pairs
// picked at one instant, given the cube pose at that instant.
MountSolution solve_mount(const std::vector<Vec3>& scan_points,
                          const std::vector<Vec3>& observed_points,
                          const RigidTransform& marker_pose);

}  // namespace mfk
