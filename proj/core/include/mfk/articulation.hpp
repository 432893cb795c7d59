#pragma once

#include <optional>
#include <vector>

#include "mfk/types.hpp"

namespace mfk {

enum class JointKind { Revolute, Sliding };

struct JointSpec {
  JointKind kind = JointKind::Revolute;
  Vec3 axis{0.0, 0.0, 1.0};          // unit, object-canonical frame
  std::optional<Vec3> pivot;         // present iff revolute

  void validate() const;
};

// Marker corners of one moving part expressed in the object-canonical frame,
// one entry per observed articulation state. Corner order must correspond
// across states.
struct PartObservationSet {
  std::vector<std::vector<Vec3>> states;

  void validate() const;  // >=2 states, >=3 corners, consistent counts
};

// Pure-translation joint. Axis is the normalized mean corner displacement
// over all ordered state pairs. Throws NoDisplacement (max displacement
// < 1 mm) and RotationDetected (any pairwise rotation >= 0.5 deg).
JointSpec fit_sliding(const PartObservationSet& obs);

struct RevoluteFit {
  JointSpec joint;
  std::vector<double> states;  // radians relative to the first state; [0] = 0
  double objective = 0.0;      // sum of squared corner mismatches at solution
};

// Rotation joint: axis, pivot, and per-state angles minimizing the summed
// corner mismatch over all state pairs. Pivot is gauge-fixed to the axis
// point nearest the corner centroid. Throws InsufficientRotation (max
// relative rotation < 2 deg) and NonConvergence.
RevoluteFit fit_revolute(const PartObservationSet& obs);

struct PartStateOptions {
  double translation_tol = 0.01;             // meters
  double rotation_tol = 5.0 * M_PI / 180.0;  // radians
};

struct PartStateResult {
  double value = 0.0;                 // radians (revolute) or meters (sliding)
  double residual_translation = 0.0;  // meters of motion the joint cannot explain
  double residual_rotation = 0.0;     // radians of motion the joint cannot explain
};

// Scalar articulation coordinate of a part pose relative to its base, zero at
// the object-canonical placement. Throws ModelViolation when the residual
// exceeds the thresholds.
PartStateResult part_state(const RigidTransform& base_pose, const RigidTransform& part_pose,
                           const JointSpec& joint, const PartStateOptions& opt = {});

// transform of the part at articulation state s (identity at s = 0)
RigidTransform joint_transform(const JointSpec& joint, double s);

}  // namespace mfk
