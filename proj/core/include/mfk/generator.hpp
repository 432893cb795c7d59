#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfk/articulation.hpp"
#include "mfk/calibration.hpp"
#include "mfk/multiview.hpp"
#include "mfk/random.hpp"
#include "mfk/session.hpp"
#include "mfk/simulation.hpp"
#include "mfk/skeleton.hpp"
#include "mfk/types.hpp"

namespace mfk {

// Synthetic capture with exact ground truth. Every generator is a pure
// function of its spec, including the seed; identical specs give identical
// bytes once serialized.

struct RigSpec {
  int cameras = 20;
  double radius = 3.0;
  std::vector<double> ring_heights = {1.2, 2.0, 2.8};
  Vec3 look_at{0.0, 0.0, 1.0};
  double focal_px = 1600.0;
  int width = 2048;
  int height = 1536;

  void validate() const;  // throws InvalidSpec
};

// cameras spread over horizontal rings, every one aimed at look_at; ids 0..n-1
std::vector<CameraModel> make_rig(const RigSpec& spec = {});

// sum of a few sinusoids with rng-drawn frequencies and phases; the
// amplitudes are normalized so |value(t)| <= amplitude for all t
class SmoothSignal {
 public:
  SmoothSignal() = default;
  // min_frequency_hz <= 0 falls back to 0.15 * max; raise it when the clip is
  // short, a component slower than the window degenerates into a ramp
  SmoothSignal(Rng& rng, double amplitude, double max_frequency_hz, int terms = 3,
               double min_frequency_hz = 0.0);

  double operator()(double t) const;

 private:
  struct Term {
    double amplitude = 0.0;
    double frequency = 0.0;
    double phase = 0.0;
  };
  std::vector<Term> terms_;
};

// smooth rigid trajectory: translation inside a box around center, rotation
// vector bounded by rotation_amplitude
class SmoothPose {
 public:
  SmoothPose() = default;
  SmoothPose(Rng& rng, const Vec3& center, double translation_amplitude,
             double rotation_amplitude, double max_frequency_hz);

  RigidTransform operator()(double t) const;

 private:
  Vec3 center_{0.0, 0.0, 0.0};
  SmoothSignal tx_, ty_, tz_, rx_, ry_, rz_;
};

// grouped per-face records flattened to the per-corner observations the
// triangulator consumes
std::vector<CornerDetection> split_detections(const std::vector<DetectionRecord>& records);

// one planar square marker; a record is emitted per camera that sees all
// four corners front-on and inside the image
void detect_square(int marker_id, const std::array<Vec3, 4>& corners, const Vec3& normal,
                   const std::vector<CameraModel>& rig, std::int64_t frame,
                   double noise_px, Rng& rng, std::vector<DetectionRecord>& out);

// pixel detections of one cube face for every camera that sees it head-on
// and fully in frame; marker_id = cube.id * 6 + face
void detect_cube(const MarkerCube& cube, const RigidTransform& host_pose,
                 const std::vector<CameraModel>& rig, std::int64_t frame,
                 double noise_px, Rng& rng, std::vector<DetectionRecord>& out);

// --- rigid object tracked by the camera rig ---

struct TrackingSpec {
  RigSpec rig;
  int frames = 120;
  double camera_rate = 30.0;
  double noise_px = 0.0;
  int cubes = 2;  // marker cubes mounted on the object
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrackingScenario {
  CaptureSession session;             // rig, detections, object spec, truth poses
  std::vector<RigidTransform> truth;  // object -> world per frame
};

TrackingScenario generate_object_tracking(const TrackingSpec& spec);

// --- articulated object: fixed base plus one revolute or sliding part ---

struct ArticulatedSpec {
  RigSpec rig;
  int frames = 90;
  JointKind kind = JointKind::Revolute;
  double camera_rate = 30.0;
  double noise_px = 0.0;
  std::uint64_t seed = 2;

  void validate() const;
};

struct ArticulatedScenario {
  CaptureSession session;  // object parts: "base" (fixed) and "part"
  std::vector<RigidTransform> base_truth;
  std::vector<double> state_truth;
  JointSpec joint;  // object-frame truth
};

ArticulatedScenario generate_articulated_object(const ArticulatedSpec& spec);

// direct corner observations of a moving part in the host frame, one entry
// per state; geometry only, no cameras involved
PartObservationSet make_part_observations(const JointSpec& joint,
                                          const std::vector<double>& states,
                                          const std::vector<MarkerCube>& cubes,
                                          double noise_m, Rng& rng);

// --- range-of-motion clip for body calibration ---

struct BodyRomSpec {
  int frames = 300;
  double rate = 60.0;
  double noise_m = 0.0;               // gaussian on observed corners
  double offset_perturbation = 0.0;   // m, applied to every observable joint
  std::uint64_t seed = 3;

  void validate() const;
};

struct BodyRomScenario {
  BodySkeleton truth;
  BodySkeleton init;  // truth with perturbed offsets
  std::vector<BodyCalibrationFrame> frames;
  std::vector<RigidTransform> alignments;  // truth person -> camera
  std::vector<int> perturbed_joints;
};

// joints whose offsets the marker data can pin down: some marker lives in
// the joint's subtree and the joint is not the root (a root offset is
// indistinguishable from the per-frame alignment)
std::vector<int> observable_offset_joints(const BodySkeleton& skel);

BodyRomScenario generate_body_rom(const BodyRomSpec& spec);

// --- touch protocol for hand calibration ---

struct HandProtocolSpec {
  bool left = false;
  double scale_spread = 0.15;    // truth scales uniform in 1 +- spread
  double offset_spread = 0.008;  // truth offsets uniform per coordinate, m
  double marker_spread = 0.004;  // truth wrist markers moved off the template
  double touch_noise_m = 0.0;    // fingertip lands this far from the corner
  std::uint64_t seed = 4;

  void validate() const;
};

struct HandProtocolScenario {
  HandSkeleton truth;
  HandSkeleton init;  // template markers, unit scales, zero offsets
  CalibrationStructure structure;
  std::vector<HandTouchEvent> events;
};

HandProtocolScenario generate_hand_protocol(const HandProtocolSpec& spec);

// --- carried object stream for gap studies ---

struct CarriedObjectSpec {
  int frames = 240;
  double rate = 30.0;
  std::uint64_t seed = 5;

  void validate() const;
};

struct CarriedObjectScenario {
  TriangleMesh mesh;                                // object-local
  std::vector<std::vector<RigidTransform>> joints;  // per frame, world
  std::vector<RigidTransform> object;               // truth object -> world
  int carrying_joint = 0;                           // index into joints[t]
};

CarriedObjectScenario generate_carried_object(const CarriedObjectSpec& spec);

// --- wrist stream with drifting inertial poses and jittery marker poses ---

struct WristFusionSpec {
  int frames = 600;
  double rate = 30.0;
  double jitter_m = 0.003;     // marker translation noise
  double drift_m = 0.05;       // inertial drift accumulated over the clip
  double gap_fraction = 0.2;   // fraction of frames without a marker pose
  std::uint64_t seed = 8;

  void validate() const;
};

struct WristFusionScenario {
  std::vector<RigidTransform> truth;
  std::vector<RigidTransform> mocap;  // truth warped by slow drift
  std::vector<std::optional<RigidTransform>> marker;
  std::vector<double> confidence;  // zero exactly where marker is empty
};

WristFusionScenario generate_wrist_fusion(const WristFusionSpec& spec);

// --- occlusion scene for the visibility studies ---

struct OcclusionSceneSpec {
  RigSpec rig;
  int frames = 600;
  int targets = 40;
  bool mesh_occluders = true;  // false keeps only the capsule human
  std::uint64_t seed = 6;

  void validate() const;
};

SyntheticScene generate_occlusion_scene(const OcclusionSceneSpec& spec);

// --- full session: person at the origin carrying a rigid object ---

struct SessionSpec {
  RigSpec rig;
  int camera_frames = 240;
  double camera_rate = 30.0;
  double mocap_rate = 60.0;
  double noise_px = 0.3;
  std::uint64_t seed = 7;

  void validate() const;
};

CaptureSession generate_session(const SessionSpec& spec);

// detections of the body suit markers as planar squares; marker_id =
// body_marker_id_base + marker index, clear of any cube face id
constexpr int body_marker_id_base = 1000;

}  // namespace mfk
