#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfk/random.hpp"
#include "mfk/types.hpp"

namespace mfk {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  // Throws Validation InvalidArgument on out-of-range indices, non-finite
  // vertices, or degenerate (zero-area) triangles.
  void validate() const;

  std::size_t triangle_count() const { return triangles.size(); }
  Vec3 triangle_vertex(std::size_t tri, int corner) const {
    return vertices[triangles[tri][static_cast<std::size_t>(corner)]];
  }
  double area(std::size_t tri) const;
  Vec3 normal(std::size_t tri) const;  // unit; triangles are CCW outward

  void bounds(Vec3& lo, Vec3& hi) const;
};

// ASCII Wavefront OBJ, coordinates in meters. Only v/f records are
// interpreted; f entries may carry /vt/vn suffixes which are ignored.
// Polygonal faces are fan-triangulated.
TriangleMesh load_obj(const std::string& path);
void save_obj(const TriangleMesh& mesh, const std::string& path);

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c);
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c);

// Exact brute-force distance; reference oracle for the grid below.
double point_mesh_distance(const Vec3& p, const TriangleMesh& mesh);

struct SurfaceSample {
  Vec3 position;
  Vec3 normal;
};

// Area-weighted uniform samples over the surface.
std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh,
                                          std::size_t count, Rng& rng);

TriangleMesh make_box(const Vec3& extents);  // axis-aligned, centered
TriangleMesh make_cylinder(double radius, double height, int segments);

// Uniform spatial hash over triangles in the mesh's own (object-local)
// frame. Queries transform the world point into that frame first, so one
// grid serves every pose of a rigid object.
class MeshDistanceGrid {
 public:
  MeshDistanceGrid(const TriangleMesh& mesh, double cell_size);

  // Distance from world-space p to the surface, given the object's pose
  // (object-local -> world).
  double distance(const Vec3& p, const RigidTransform& pose) const;
  bool within(const Vec3& p, const RigidTransform& pose, double radius) const;

  double cell_size() const { return cell_; }

 private:
  double distance_local(const Vec3& q) const;
  bool within_local(const Vec3& q, double radius) const;
  std::size_t cell_index(int ix, int iy, int iz) const;

  const TriangleMesh* mesh_;
  double cell_;
  Vec3 origin_;
  int dims_[3];
  std::vector<std::vector<std::uint32_t>> cells_;
  Vec3 lo_, hi_;
};

}  // namespace mfk
