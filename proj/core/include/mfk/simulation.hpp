#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfk/mesh.hpp"
#include "mfk/raycast.hpp"
#include "mfk/types.hpp"

namespace mfk {

// Pose/position streams hold one entry per frame, or a single entry that
// applies to every frame.

struct OccluderMesh {
  TriangleMesh mesh;
  std::vector<RigidTransform> poses;
};

struct TargetPoint {
  std::vector<Vec3> positions;
  // world-space unit normals, same sizing as positions; a zero vector
  // marks a point visible from every direction
  std::vector<Vec3> normals;
};

struct SyntheticScene {
  std::vector<CameraModel> rig;
  std::vector<OccluderMesh> occluders;
  std::vector<std::vector<Capsule>> capsules;  // per frame; may be empty
  std::vector<TargetPoint> targets;
  std::size_t frame_count = 1;
  std::uint64_t seed = 0;

  void validate() const;  // throws Validation InvalidArgument
};

struct VisibilityRecord {
  // cameras[target] = ascending rig indices with clear line of sight
  std::vector<std::vector<int>> cameras;
};

// Holds one BVH per occluder mesh; build once, query many frames.
class SceneTracer {
 public:
  explicit SceneTracer(const SyntheticScene& scene);

  VisibilityRecord visibility(std::size_t frame) const;
  std::vector<VisibilityRecord> visibility_all() const;  // parallel over frames

 private:
  bool clear_line(const Vec3& from, const Vec3& to, std::size_t frame) const;

  const SyntheticScene* scene_;
  std::vector<MeshBvh> bvhs_;
  // endpoints may lie exactly on an occluder surface (markers attached to
  // the object being tracked); trim the segment so they never self-block
  static constexpr double kEndpointMargin = 1e-6;
};

VisibilityRecord visibility(const SyntheticScene& scene, std::size_t frame);
std::vector<VisibilityRecord> visibility_all(const SyntheticScene& scene);

// Reference path testing every occluder triangle without acceleration.
VisibilityRecord visibility_brute(const SyntheticScene& scene, std::size_t frame);

struct StudyRow {
  double x = 0;  // subset size or marker count
  double mean = 0;
  double stddev = 0;
  std::size_t samples = 0;
};

// Detection ratio vs camera-subset size. A corner counts as detected when
// ≥2 subset cameras see it. Each sample draws one random rig permutation
// and evaluates every subset size on its prefixes, so per-sample ratios
// are monotone in subset size by construction and the subset marginal at
// each size stays uniform.
std::vector<StudyRow> camera_count_study(const SyntheticScene& scene,
                                         const std::vector<std::size_t>& subset_sizes,
                                         std::size_t samples_per_size = 20);

// Tracking-success ratio vs surface-marker count. Markers are prefixes of
// scene.targets; a marker is tracked when ≥3 cameras see it; a window
// fails if any frame has fewer than 4 tracked markers. Windows start at
// multiples of stride; max_windows = 0 means all that fit.
std::vector<StudyRow> virtual_marker_study(const SyntheticScene& scene,
                                           const std::vector<std::size_t>& marker_counts,
                                           std::size_t window = 300,
                                           std::size_t stride = 30,
                                           std::size_t max_windows = 0);

void write_study_csv(const std::string& path, const std::string& x_name,
                     const std::vector<StudyRow>& rows);

}  // namespace mfk
