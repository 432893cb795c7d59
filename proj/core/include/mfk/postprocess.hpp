#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfk/mesh.hpp"
#include "mfk/types.hpp"

namespace mfk {

struct TrackGap {
  std::string id;        // object or marker name
  std::int64_t t0 = 0;   // first missing frame
  std::int64_t t1 = -1;  // last missing frame; t1 == t0-1 is an empty gap

  std::int64_t length() const { return t1 - t0 + 1; }
  // Throws Validation InvalidArgument unless 0 ≤ t0, t0-1 ≤ t1 < frames.
  void validate(std::size_t frames) const;
};

// Confidence of one tracked wrist sample from view count and reprojection
// rms. Every fusion weight flows through this one map.
double marker_confidence(int n_views, double rms_px);

struct WristFusionOptions {
  // smoothing radius in frames at confidence 0; shrinks linearly to 0 at
  // confidence 1, so fully trusted samples pass through untouched
  int max_smoothing_radius = 15;
};

struct FusedWrist {
  std::vector<RigidTransform> poses;
  std::vector<double> offsets_weight;  // total kernel weight used per frame
  bool no_anchor = false;  // an untracked run touched a sequence boundary
};

// Blends the marker-tracked wrist stream with the mocap-driven one, both
// already at a common rate. The world-frame correction offset
// marker ∘ inverse(mocap) is estimated per frame by confidence-weighted
// smoothing over nearby tracked frames and applied to mocap; frames far
// from any tracked sample hold the nearest offset rigidly. confidence[t]
// is clamped to [0,1] and ignored where marker[t] is empty. Throws
// LengthMismatch when stream lengths differ.
FusedWrist fuse_wrist(const std::vector<std::optional<RigidTransform>>& marker,
                      const std::vector<double>& confidence,
                      const std::vector<RigidTransform>& mocap,
                      const WristFusionOptions& options = {});

RigidTransform blend_pose(const RigidTransform& a, const RigidTransform& b,
                          double alpha);  // lerp translation, slerp rotation

enum class FillMethod { JointAttachment, Interpolation };

struct GapFill {
  std::vector<RigidTransform> poses;  // frames t0..t1
  FillMethod method = FillMethod::JointAttachment;
  int joint = -1;               // index used when attached
  bool no_nearby_joint = false; // fell back to lerp/slerp
  bool no_anchor = false;       // only one boundary existed; held one-sided
};

struct GapFillOptions {
  double proximity_radius = 0.10;  // m from joint to object surface
};

// Reconstructs object poses across a tracking gap by attaching the object
// to the closest body joint. The joint must lie within proximity_radius of
// the posed surface at both boundary frames and be the same joint at both;
// its boundary-relative transforms are blended across the gap. Otherwise
// falls back to baseline interpolation (flagged). Throws MissingBoundary
// when no boundary pose exists on either side.
GapFill fill_object_gap(const TrackGap& gap,
                        const std::vector<std::vector<RigidTransform>>& joints,
                        const std::vector<std::optional<RigidTransform>>& object,
                        const MeshDistanceGrid& surface,
                        const GapFillOptions& options = {});

// Pure lerp/slerp between the two boundary poses, uniform in frame index.
// Throws MissingBoundary if a boundary pose is absent.
std::vector<RigidTransform> baseline_interpolate(
    const TrackGap& gap, const std::vector<std::optional<RigidTransform>>& object);

// Magnitude of the third position derivative (m/s^3) by 5-point central
// differences; entry k corresponds to input frame k+2, so the result has
// size() - 4 entries (empty for exactly 4 frames). Throws TooShort for
// fewer than 4 frames.
std::vector<double> jerk_profile(const std::vector<Vec3>& positions, double rate);

struct DropRecoverRow {
  std::size_t window = 0;
  double fill_translation = 0;      // mean m over dropped frames
  double fill_rotation = 0;         // mean rad
  double baseline_translation = 0;
  double baseline_rotation = 0;
};

// Drops centered windows from a fully tracked object trajectory, recovers
// them with both methods, and reports mean errors against the original.
// Gaps are placed at 1/4, 1/2, and 3/4 of the stream and averaged.
std::vector<DropRecoverRow> drop_and_recover(
    const std::vector<std::vector<RigidTransform>>& joints,
    const std::vector<RigidTransform>& object, const MeshDistanceGrid& surface,
    const std::vector<std::size_t>& windows,
    const GapFillOptions& options = {});

}  // namespace mfk
