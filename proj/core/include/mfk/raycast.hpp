#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mfk/mesh.hpp"
#include "mfk/types.hpp"

namespace mfk {

struct RayHit {
  double t;  // parameter along the ray/segment
  std::uint32_t triangle;
};

// Möller-Trumbore. Returns the hit parameter in [0, inf) for rays, or
// nullopt. Backfaces count as hits.
std::optional<double> ray_triangle(const Vec3& origin, const Vec3& dir,
                                   const Vec3& a, const Vec3& b, const Vec3& c,
                                   double eps = 1e-12);

// Binary AABB tree over a triangle mesh, built once per mesh. Queries take
// the mesh pose so the same tree serves a moving rigid object.
class MeshBvh {
 public:
  explicit MeshBvh(const TriangleMesh& mesh, int leaf_size = 4);

  // True if the open segment (p, q) crosses any triangle. Endpoints sitting
  // exactly on the surface do not count, so visibility checks may run from
  // points on the mesh itself.
  bool segment_occluded(const Vec3& p, const Vec3& q, const RigidTransform& pose,
                        double endpoint_margin = 1e-9) const;

  std::optional<RayHit> first_hit(const Vec3& origin, const Vec3& dir,
                                  const RigidTransform& pose) const;

 private:
  struct Node {
    Vec3 lo, hi;
    std::int32_t left = -1;   // -1 for leaf
    std::int32_t right = -1;
    std::uint32_t begin = 0;  // leaf: range into order_
    std::uint32_t count = 0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end, int leaf_size);
  bool segment_occluded_local(const Vec3& p, const Vec3& q, double margin) const;
  std::optional<RayHit> first_hit_local(const Vec3& origin, const Vec3& dir) const;

  const TriangleMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  std::vector<Vec3> centroids_;
};

// Capsule around the segment [a, b] with the given radius, in world space.
struct Capsule {
  Vec3 a;
  Vec3 b;
  double radius = 0.0;
};

double segment_segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0,
                                const Vec3& q1);

// True when the segment passes through the capsule volume (distance from
// the capsule axis below radius). Touching exactly at the radius does not
// block.
bool segment_hits_capsule(const Vec3& p, const Vec3& q, const Capsule& cap);

}  // namespace mfk
