#pragma once

#include <array>
#include <optional>
#include <vector>

#include "mfk/skeleton.hpp"
#include "mfk/types.hpp"

namespace mfk {

// Fixture with six ordered touchable corner vertices, localized in camera
// space; one outward normal per corner.
struct CalibrationStructure {
  std::array<Vec3, 6> corners;
  std::array<Vec3, 6> normals;

  // pairwise corner distances must match the reference within 1 mm
  void validate_rigidity(const CalibrationStructure& reference) const;

  // three stacked 6 cm cubes in an L arrangement, placed by pose
  static CalibrationStructure standard(const RigidTransform& pose = RigidTransform::identity());
};

// Rigid alignment person frame -> camera frame from paired corner positions
// visible this frame. Throws NoVisibleMarkers below 3 corners.
RigidTransform mocap_to_camera(const std::vector<Vec3>& mocap_corners,
                               const std::vector<Vec3>& camera_corners);

struct BodyCalibrationFrame {
  Eigen::MatrixX3d angles;  // 23 x 3
  // camera-space corners per skeleton marker; nullopt where occluded
  std::vector<std::optional<std::array<Vec3, 4>>> observed;
};

struct BodyCalibrationOptions {
  double learning_rate = 0.008;
  int epochs = 50;
  int batch_size = 25;    // frames per gradient step within an epoch
  double momentum = 0.9;  // first-moment decay of the moment-scaled steps
  double lambda_body = 100.0;
  double lambda_foot = 5000.0;
  double ground_band = 0.01;  // feet stay in [0, band] along z
  bool symmetry_regularizer = false;
  bool spine_regularizer = false;
  double regularizer_weight = 1.0;
};

struct BodyCalibrationResult {
  BodySkeleton skeleton;
  std::vector<RigidTransform> alignments;  // per-frame person -> camera
  std::vector<double> loss_history;        // one entry per epoch
  double final_marker_rms = 0.0;           // meters over visible corners
};

// Joint offsets and marker placements fit by stochastic gradient descent
// with moment-scaled steps on the marker-MSE plus ground-band loss;
// per-frame alignments refit by Kabsch between epochs. Loss is
// non-increasing across epochs by construction (a failed pass is rolled
// back and retried at a smaller step); throws NonDecreasingLoss when no
// decrease is possible away from a stationary point.
BodyCalibrationResult calibrate_body(const std::vector<BodyCalibrationFrame>& frames,
                                     const BodySkeleton& init,
                                     const BodyCalibrationOptions& opt = {});

struct ProtocolStep {
  std::vector<int> corners;  // structure corner ids, 1-based
  std::vector<int> fingers;  // 1 thumb .. 5 little, pairs with corners
};

// the fixed 23-step touch sequence, per hand side
std::vector<ProtocolStep> standard_hand_protocol(bool left);

struct HandTouchEvent {
  std::vector<int> corners;        // as in ProtocolStep
  std::vector<int> fingers;
  Eigen::MatrixX3d glove_angles;   // 20 x 3 at the touch instant
  std::array<std::array<Vec3, 4>, 3> observed_wrist;  // camera space
  Vec3 mocap_wrist{0.0, 0.0, 0.0};                    // camera space
};

struct HandCalibrationOptions {
  int iterations = 150;
  int scale_start = 50;    // scales frozen before this iteration
  int offset_start = 100;  // offsets frozen before this iteration
  double lambda_tip = 1.0;
  double lambda_wrist = 1.0;
  double lambda_pen = 1.0;
  double initial_step = 0.01;
};

struct HandCalibrationResult {
  HandSkeleton skeleton;
  std::vector<double> loss_history;
  double mean_tip_distance = 0.0;  // meters at the solution
};

// Staged descent over wrist marker placements, then scales, then offsets;
// box constraints are clamped at every iterate. The per-event hand pose is
// re-solved from wrist markers inside the loss, so gradients (numerical)
// see the full pipeline.
HandCalibrationResult calibrate_hand(const std::vector<HandTouchEvent>& events,
                                     const CalibrationStructure& structure,
                                     const HandSkeleton& init,
                                     const HandCalibrationOptions& opt = {});

struct ApeEvent {
  int finger = 0;  // 1-based
  Vec3 target{0.0, 0.0, 0.0};
  Eigen::MatrixX3d glove_angles;
  std::array<std::array<Vec3, 4>, 3> observed_wrist;
};

// mean fingertip-to-target distance over touch events; throws NoEvents
double validate_hand_ape(const std::vector<ApeEvent>& events, const HandSkeleton& skel);

// hand root pose solved from the wrist markers (shared by calibration,
// validation, and wrist fusion)
RigidTransform hand_pose_from_markers(const HandSkeleton& skel,
                                      const std::array<std::array<Vec3, 4>, 3>& observed);

}  // namespace mfk
